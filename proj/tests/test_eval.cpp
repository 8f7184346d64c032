#include "hcref/eval.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <sstream>

using namespace hcref::eval;

namespace {

RunConfig quick_config() {
    RunConfig c;
    c.epochs_per_phase = 4;
    c.T_atk = 3;
    c.hidden = 8;
    c.samples = 4;
    return c;
}

/// Phase-1 model only; records every config it is asked to train.
struct StubTrainer {
    std::shared_ptr<std::mutex> mu = std::make_shared<std::mutex>();
    std::shared_ptr<std::vector<RunConfig>> seen = std::make_shared<std::vector<RunConfig>>();

    ModelParams operator()(const Graph& g, const RunConfig& cfg) const {
        {
            std::lock_guard<std::mutex> lock(*mu);
            seen->push_back(cfg);
        }
        auto c = cfg;
        c.epochs_per_phase = 30;
        return hcref::train::train_phase1(g, c);
    }
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("attack kinds round-trip through their names") {
    for (auto k : {AttackKind::Clean, AttackKind::CePgd, AttackKind::CwPgd, AttackKind::Random, AttackKind::Dice})
        CHECK(attack_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(attack_kind_from_string("fgsm"), std::invalid_argument);
    CHECK(attack_key(AttackKind::CePgd, 0.05) == "ce-pgd@0.05");
}

TEST_CASE("no flips leaves accuracy at its clean value and the success rate at zero") {
    const auto g = fixtures::synthetic(40, 1);
    const auto p = StubTrainer{}(g, quick_config());
    const FlipSet none{g.num_nodes, {}};
    CHECK(evaluate(p, g, &none) == evaluate(p, g, nullptr));
    const auto sr = attack_success_rate(p, g, none);
    CHECK(sr.omega == 0.0);
    CHECK(sr.wrong_after == sr.wrong_before);
    CHECK(sr.num_nodes == static_cast<std::int64_t>(g.splits.test.size()));
}

TEST_CASE("evaluate matches an independent count over the test split") {
    const auto g = fixtures::synthetic(40, 2);
    const auto p = StubTrainer{}(g, quick_config());
    const auto pred = predictions(p, g, nullptr);
    int correct = 0;
    for (auto i : g.splits.test) correct += pred[i] == g.labels[i];
    CHECK(evaluate(p, g, nullptr) == doctest::Approx(double(correct) / g.splits.test.size()));
    const NodeSet first{0, 1};
    CHECK(evaluate(p, g, nullptr, first) == doctest::Approx(((pred[0] == g.labels[0]) + (pred[1] == g.labels[1])) / 2.0));
}

TEST_CASE("success rate counts test nodes newly misclassified") {
    const auto g = fixtures::synthetic(40, 3);
    const auto p = StubTrainer{}(g, quick_config());
    auto atk = eval_attack_from(quick_config(), AttackKind::CePgd, 0.2, 20);
    const auto flips = run_attack(p, g, atk);
    const auto before = predictions(p, g, nullptr), after = predictions(p, g, &flips);
    std::int64_t delta = 0;
    for (auto i : g.splits.test) delta += (after[i] != g.labels[i]) - (before[i] != g.labels[i]);
    const auto sr = attack_success_rate(p, g, flips);
    CHECK(sr.omega == doctest::Approx(double(delta) / g.splits.test.size()));
    CHECK(sr.wrong_after - sr.wrong_before == delta);
}

TEST_CASE("every attack kind stays within the budget") {
    const auto g = fixtures::synthetic(40, 4);
    const auto p = StubTrainer{}(g, quick_config());
    const auto budget = hcref::attack::flip_budget(0.1, g.num_edges());
    for (auto k : {AttackKind::Clean, AttackKind::CePgd, AttackKind::CwPgd, AttackKind::Random, AttackKind::Dice}) {
        const auto flips = run_attack(p, g, eval_attack_from(quick_config(), k, 0.1, 10));
        CHECK(static_cast<std::int64_t>(flips.size()) <= budget);
        if (k == AttackKind::Clean) CHECK(flips.size() == 0);
        if (k == AttackKind::Random || k == AttackKind::Dice) CHECK(static_cast<std::int64_t>(flips.size()) == budget);
    }
}

TEST_CASE("victim sets follow their mode") {
    const auto g = fixtures::synthetic(40, 5);
    const auto p = StubTrainer{}(g, quick_config());
    using hcref::attack::VictimMode;
    const auto [tr, l1] = victim_set(p, g, VictimMode::TrainLabeled, hcref::model::HeadActivation::Relu);
    CHECK(tr.size() == g.splits.train.size());
    CHECK(l1 == g.labels);
    const auto [te, l2] = victim_set(p, g, VictimMode::TestTrueLabels, hcref::model::HeadActivation::Relu);
    CHECK(te.size() == g.splits.test.size());
    const auto [all, l3] = victim_set(p, g, VictimMode::AllPseudoLabels, hcref::model::HeadActivation::Relu);
    CHECK(all.size() == static_cast<std::size_t>(g.num_nodes));
    CHECK(l3 == hcref::train::rst_labels(p, g).labels);
}

TEST_CASE("an empty sweep grid writes only the header") {
    const auto g = fixtures::synthetic(30, 6);
    SweepGrid grid;
    grid.base = quick_config();
    const auto rows = robustness_sweep(g, grid, 1, StubTrainer{});
    CHECK(rows.empty());
    std::ostringstream os;
    write_rows_csv(os, rows);
    CHECK(os.str() == "method,attack,epsilon,seed,accuracy\n");
}

TEST_CASE("robustness sweep emits per-seed, mean and std rows and reuses trainings") {
    const auto g = fixtures::synthetic(30, 7);
    SweepGrid grid;
    grid.base = quick_config();
    grid.methods = {Method::Gcn, Method::HcRef};
    grid.attacks = {AttackKind::CePgd, AttackKind::Random};
    grid.epsilons = {0.05, 0.1};
    grid.seeds = {0, 1};
    grid.attack_iters = 5;
    StubTrainer stub;
    const auto rows = robustness_sweep(g, grid, 2, stub);
    CHECK(rows.size() == 2 * 2 * 2 * (2 + 2));
    // gcn ignores the train epsilon: 2 seeds; hcref: 2 seeds x 2 epsilons
    CHECK(stub.seen->size() == 6);
    for (std::size_t i = 0; i < rows.size(); i += 4) {
        CHECK(rows[i].seed == "0");
        CHECK(rows[i + 1].seed == "1");
        CHECK(rows[i + 2].seed == "mean");
        CHECK(rows[i + 3].seed == "std");
        const double a = rows[i].accuracy, b = rows[i + 1].accuracy;
        CHECK(rows[i + 2].accuracy == doctest::Approx((a + b) / 2));
        CHECK(rows[i + 3].accuracy == doctest::Approx(std::abs(a - b) / 2));
    }
    // thread count does not change the numbers
    const auto serial = robustness_sweep(g, grid, 1, StubTrainer{});
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].accuracy == serial[i].accuracy);
}

TEST_CASE("sweep grids parse from JSON and reject bad input") {
    const auto grid = sweep_grid_from_json(
        {{"methods", {"gcn", "hcref"}}, {"epsilons", {0.1}}, {"seeds", {7}}, {"config", {{"hidden", 4}}}});
    CHECK(grid.methods.size() == 2);
    CHECK(grid.base.hidden == 4);
    CHECK(grid.seeds == std::vector<std::uint64_t>{7});
    CHECK(to_json(sweep_grid_from_json(to_json(grid))) == to_json(grid));
    CHECK_THROWS_AS(sweep_grid_from_json({{"methodz", {"gcn"}}}), std::invalid_argument);
    CHECK_THROWS_AS(sweep_grid_from_json({{"epsilons", {1.5}}}), std::invalid_argument);
    CHECK_THROWS_AS(sweep_grid_from_json({{"seeds", nlohmann::json::array()}}), std::invalid_argument);
}

TEST_CASE("the clean row of the misclassification grid is the clean error rate") {
    const auto g = fixtures::synthetic(30, 8);
    StubTrainer stub;
    const auto grid = misclassification_grid(g, {0.0, 0.1}, {0.0, 0.1}, quick_config(), {0, 1}, 5, 1, stub);
    REQUIRE(grid.percent.size() == 2);
    REQUIRE(grid.percent[0].size() == 2);
    CHECK((*stub.seen)[0].method == Method::Gcn);
    CHECK((*stub.seen)[2].method == Method::HcRef);
    CHECK((*stub.seen)[2].epsilon == 0.1);
    for (std::size_t j = 0; j < 2; ++j) {
        double expect = 0.0;
        for (std::size_t s = 0; s < 2; ++s) expect += 100.0 * (1.0 - evaluate(StubTrainer{}(g, (*stub.seen)[j * 2 + s]), g, nullptr));
        CHECK(grid.percent[0][j] == doctest::Approx(expect / 2));
        CHECK(grid.column_average[j] == doctest::Approx((grid.percent[0][j] + grid.percent[1][j]) / 2));
    }
    std::ostringstream os;
    write_grid_csv(os, grid);
    CHECK(os.str().rfind("attack_epsilon,train_0,train_0.1\n", 0) == 0);
    CHECK(count_lines(os.str()) == 4);
}

TEST_CASE("ablation series has one point per adversarial epoch") {
    const auto g = fixtures::synthetic(30, 9);
    auto cfg = quick_config();
    cfg.series_attack_iters = 3;
    const auto series = ablation_series(g, {Method::Gcn, Method::Hc1}, cfg, {0, 1}, 2);
    REQUIRE(series.size() == 4);
    for (const auto& s : series) {
        CHECK(s.accuracy.size() == 8);
        CHECK(s.tail_mean == doctest::Approx(tail_mean(s.accuracy, 4)));
    }
    for (double a : series[0].accuracy) CHECK(a == series[0].accuracy.front());
    std::ostringstream os;
    write_series_csv(os, series);
    CHECK(os.str().rfind("method,epoch,accuracy\n", 0) == 0);
    CHECK(count_lines(os.str()) == 1 + 2 * 8);
}

TEST_CASE("tail mean averages the last entries") {
    CHECK(tail_mean({1, 2, 3, 4}, 2) == 3.5);
    CHECK(tail_mean({1, 2}, 5) == 1.5);
    CHECK(tail_mean({}, 3) == 0.0);
}

TEST_CASE("hyperparameter sweep holds the other weight fixed") {
    const auto g = fixtures::synthetic(30, 10);
    StubTrainer stub;
    const auto atk = eval_attack_from(quick_config(), AttackKind::Random, 0.1, 1);
    const auto rows = hyperparam_sweep(g, SweepParam::Beta, {0.0, 1.0}, quick_config(), atk, {3}, 0.05, 1, stub);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].beta == 1.0);
    CHECK(rows[1].alpha == 0.05);
    CHECK((*stub.seen)[1].beta == 1.0);
    CHECK((*stub.seen)[1].method == Method::HcRef);
    std::ostringstream os;
    write_hyper_csv(os, rows);
    CHECK(os.str().rfind("param,value,alpha,beta,seed,accuracy\nbeta,0,0.05,0,3,", 0) == 0);
}

TEST_CASE("parallel_for writes by index and rethrows job failures") {
    std::vector<int> out(100, -1);
    parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
    std::atomic<int> ran{0};
    CHECK_THROWS_WITH_AS(parallel_for(10, 3,
                                      [&](std::size_t i) {
                                          ++ran;
                                          if (i == 2) throw std::runtime_error("job 2");
                                      }),
                         "job 2", std::runtime_error);
    CHECK(ran >= 1);
    CHECK_NOTHROW(parallel_for(0, 4, [](std::size_t) { throw std::logic_error("never"); }));
}

TEST_CASE("thread count comes from HCREF_THREADS") {
    ::unsetenv("HCREF_THREADS");
    CHECK(thread_count_from_env() == 1);
    ::setenv("HCREF_THREADS", "3", 1);
    CHECK(thread_count_from_env() == 3);
    ::setenv("HCREF_THREADS", "0", 1);
    CHECK_THROWS_AS(thread_count_from_env(), std::invalid_argument);
    ::setenv("HCREF_THREADS", "2x", 1);
    CHECK_THROWS_AS(thread_count_from_env(), std::invalid_argument);
    ::unsetenv("HCREF_THREADS");
}

TEST_CASE("report JSON rounds to six significant digits") {
    EvalReport r;
    r.clean_acc = 0.123456789;
    r.attacked_acc[attack_key(AttackKind::CePgd, 0.05)] = 2.0 / 3.0;
    const auto j = to_json(r);
    CHECK(j.at("clean_acc").get<double>() == 0.123457);
    CHECK(j.at("attacked_acc").at("ce-pgd@0.05").get<double>() == 0.666667);
}
