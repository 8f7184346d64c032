#include "hcref/train.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace hcref::train;
using hcref::model::encoder_equal;
using hcref::model::head_equal;

namespace {

RunConfig small_config(Method m = Method::HcRef) {
    RunConfig c;
    c.method = m;
    c.epochs_per_phase = 6;
    c.T_atk = 5;
    c.hidden = 8;
    c.epsilon = 0.1;
    c.samples = 5;
    c.seed = 4;
    return c;
}

bool same_log(const RunLog& a, const RunLog& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto &x = a[i], &y = b[i];
        if (x.epoch != y.epoch || x.phase != y.phase || x.loss_ce != y.loss_ce || x.reg != y.reg ||
            x.attack_loss != y.attack_loss || x.flips != y.flips)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("zero epochs return the initial parameters") {
    const auto g = fixtures::synthetic(30, 1);
    auto cfg = small_config();
    cfg.epochs_per_phase = 0;
    const auto p = train_phase1(g, cfg);
    const auto init = hcref::model::init_params(cfg.seed, g.num_features, cfg.hidden, g.num_classes);
    CHECK(encoder_equal(p, init));
    CHECK(head_equal(p, init));
}

TEST_CASE("phase 1 lowers the training loss and fits the training nodes") {
    const auto g = fixtures::synthetic(60, 2);
    auto cfg = small_config();
    cfg.epochs_per_phase = 100;
    RunLog log;
    const auto p = train_phase1(g, cfg, &log);
    REQUIRE(log.size() == 100);
    CHECK(log.back().loss_ce < log.front().loss_ce);
    const auto pred = hcref::model::predict(
        hcref::model::forward(p, hcref::graphio::normalize_adjacency(hcref::graphio::adjacency(g)), g.features).Z);
    CHECK(hcref::model::accuracy(pred, g.labels,
                                 hcref::model::NodeSet(g.splits.train.begin(), g.splits.train.end())) > 0.9);
}

TEST_CASE("rst labels keep every training label and copy predictions elsewhere") {
    const auto g = fixtures::synthetic(60, 3);
    auto cfg = small_config();
    cfg.epochs_per_phase = 40;
    const auto p = train_phase1(g, cfg);
    const auto soft = rst_labels(p, g);
    const auto pred = hcref::model::predict(
        hcref::model::forward(p, hcref::graphio::normalize_adjacency(hcref::graphio::adjacency(g)), g.features).Z);
    for (hcref::graphio::NodeIndex i = 0; i < g.num_nodes; ++i) {
        const bool labeled = i < static_cast<hcref::graphio::NodeIndex>(g.splits.train.size());
        CHECK(soft.labels[i] == (labeled ? g.labels[i] : pred[i]));
        CHECK(soft.pseudo[i] == (labeled ? 0 : 1));
    }
}

TEST_CASE("a perfectly accurate phase-1 model yields the true labels everywhere") {
    hcref::graphio::SyntheticOptions o;
    o.num_nodes = 30;
    o.num_classes = 2;
    o.num_features = 10;
    o.p_in = 0.3;
    o.p_out = 0.0;
    o.feature_on = 0.9;
    o.feature_noise = 0.0;
    o.train_size = 10;
    o.val_size = 5;
    const auto g = hcref::graphio::make_synthetic(o);
    auto cfg = small_config();
    cfg.epochs_per_phase = 200;
    const auto p = train_phase1(g, cfg);
    const auto pred = hcref::model::predict(
        hcref::model::forward(p, hcref::graphio::normalize_adjacency(hcref::graphio::adjacency(g)), g.features).Z);
    REQUIRE(pred == g.labels);
    CHECK(rst_labels(p, g).labels == g.labels);
}

TEST_CASE("phase 2 freezes the head and phase 3 freezes the encoder") {
    const auto g = fixtures::synthetic(30, 5);
    const auto r = train_hcref(g, small_config());
    REQUIRE(r.phase2);
    REQUIRE(r.phase3);
    CHECK(head_equal(r.phase1, *r.phase2));
    CHECK_FALSE(encoder_equal(r.phase1, *r.phase2));
    CHECK(encoder_equal(*r.phase2, *r.phase3));
    CHECK_FALSE(head_equal(*r.phase2, *r.phase3));
    CHECK(r.phase2->freeze_head);
    CHECK(r.phase3->freeze_encoder);
    CHECK(r.log.size() == 18);
    CHECK(r.log[6].epoch == 7);
    CHECK(r.log[6].phase == 2);
    CHECK(r.log.back().phase == 3);
}

TEST_CASE("every epoch respects the flip budget") {
    const auto g = fixtures::synthetic(30, 6);
    const auto cfg = small_config();
    const auto r = train_hcref(g, cfg);
    const auto budget = hcref::attack::flip_budget(cfg.epsilon, g.num_edges());
    for (const auto& row : r.log) CHECK(row.flips <= budget);
}

TEST_CASE("identical seeded runs are bit-identical") {
    const auto g = fixtures::synthetic(30, 7);
    const auto a = train_hcref(g, small_config());
    const auto b = train_hcref(g, small_config());
    CHECK(encoder_equal(a.params, b.params));
    CHECK(head_equal(a.params, b.params));
    CHECK(same_log(a.log, b.log));
    auto other = small_config();
    other.seed = 5;
    CHECK_FALSE(encoder_equal(a.params, train_hcref(g, other).params));
}

TEST_CASE("gcn stops after phase 1") {
    const auto g = fixtures::synthetic(30, 8);
    const auto r = train(g, small_config(Method::Gcn));
    CHECK_FALSE(r.phase2);
    CHECK(r.log.size() == 6);
    CHECK(encoder_equal(r.params, r.phase1));
    CHECK(adversarial_epochs(small_config(Method::Gcn)) == 0);
    CHECK(adversarial_epochs(small_config(Method::Hc1)) == 12);
}

TEST_CASE("hc2 leaves the phase-1 encoder untouched") {
    const auto g = fixtures::synthetic(30, 9);
    const auto r = train(g, small_config(Method::Hc2));
    CHECK(encoder_equal(r.params, r.phase1));
    CHECK_FALSE(head_equal(r.params, r.phase1));
    CHECK(r.log.size() == 18);
}

TEST_CASE("hc1 leaves the phase-1 head untouched") {
    const auto g = fixtures::synthetic(30, 9);
    const auto r = train(g, small_config(Method::Hc1));
    CHECK(head_equal(r.params, r.phase1));
    CHECK_FALSE(encoder_equal(r.params, r.phase1));
}

TEST_CASE("unconstrained variants update both parameter groups") {
    const auto g = fixtures::synthetic(30, 10);
    for (auto m : {Method::ConsH, Method::ConsD, Method::HcUncon, Method::Tgd, Method::Random}) {
        const auto r = train(g, small_config(m));
        CHECK_FALSE(head_equal(r.params, r.phase1));
        CHECK_FALSE(encoder_equal(r.params, r.phase1));
        CHECK(r.log.size() == 18);
    }
}

TEST_CASE("cons_d with beta = 0 coincides step for step with tgd") {
    const auto g = fixtures::synthetic(30, 11);
    auto a = small_config(Method::ConsD);
    a.beta = 0.0;
    const auto r1 = train(g, a);
    const auto r2 = train(g, small_config(Method::Tgd));
    CHECK(encoder_equal(r1.params, r2.params));
    CHECK(head_equal(r1.params, r2.params));
    for (std::size_t i = 0; i < r1.log.size(); ++i) CHECK(r1.log[i].loss_ce == r2.log[i].loss_ce);
}

TEST_CASE("random baseline deletes the configured share of edges each epoch") {
    const auto g = fixtures::synthetic(40, 12);
    auto cfg = small_config(Method::Random);
    cfg.random_del_rate = 0.1;
    const auto r = train(g, cfg);
    for (const auto& row : r.log)
        if (row.phase == 2) CHECK(row.flips == hcref::attack::flip_budget(0.1, g.num_edges()));
}

TEST_CASE("with zero smoothness weight the regularizer still reports but does not steer") {
    const auto g = fixtures::synthetic(30, 13);
    auto cfg = small_config();
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    const auto r = train_hcref(g, cfg);
    for (const auto& row : r.log)
        if (row.phase > 1) CHECK(row.reg >= -1e-12);
}

TEST_CASE("detaching the natural branch changes the update") {
    const auto g = fixtures::synthetic(30, 14);
    auto cfg = small_config(Method::ConsH);
    const auto a = train(g, cfg);
    cfg.detach_natural = true;
    const auto b = train(g, cfg);
    CHECK_FALSE(encoder_equal(a.params, b.params));
}

TEST_CASE("plain descent with a small step lowers the loss on a 6-node fixture") {
    const auto g = fixtures::synthetic(6, 15);
    auto cfg = small_config(Method::Gcn);
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    cfg.epochs_per_phase = 20;
    RunLog log;
    train_phase1(g, cfg, &log);
    for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i].loss_ce < log[i - 1].loss_ce);
}

TEST_CASE("non-finite losses abort with the epoch index") {
    auto g = fixtures::synthetic(20, 16);
    g.features.row(0).setConstant(1e308);
    try {
        train_phase1(g, small_config());
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch() == 1);
    }
}

TEST_CASE("config JSON round-trips and rejects unknown keys") {
    auto c = small_config(Method::Hc2);
    c.mu0 = 3.5;
    c.attack_loss = hcref::attack::AttackLoss::CW;
    c.head = hcref::model::HeadActivation::Linear;
    c.series_victims = hcref::attack::VictimMode::AllPseudoLabels;
    const auto back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.method == Method::Hc2);
    CHECK(back.resolved_mu0() == 3.5);

    CHECK_THROWS_AS(config_from_json({{"epsilon", 0.1}, {"bogus", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"epsilon", "high"}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"method", "nope"}}), std::invalid_argument);

    const auto nested = config_from_json(
        {{"attack", {{"mu_decay_exponent", 0.5}}}, {"train", {{"detach_natural", true}}}, {"loss", {{"mean_reduce", true}}}});
    CHECK(nested.mu_decay_exponent == 0.5);
    CHECK(nested.detach_natural);
    CHECK(nested.mean_reduce);
}

TEST_CASE("mu0 defaults depend on the attack loss") {
    RunConfig c;
    CHECK(c.resolved_mu0() == 200.0);
    c.attack_loss = hcref::attack::AttackLoss::CW;
    CHECK(c.resolved_mu0() == 0.1);
}

TEST_CASE("validation names the offending field") {
    auto expect_bad = [](RunConfig c, const std::string& field) {
        try {
            c.validate();
            FAIL("expected invalid_argument for " << field);
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    };
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.epsilon = 1.5;
    expect_bad(bad, "epsilon");
    bad = c;
    bad.epochs_per_phase = 0;
    expect_bad(bad, "epochs_per_phase");
    bad = c;
    bad.alpha = -1.0;
    expect_bad(bad, "alpha");
    bad = c;
    bad.dropout = 0.5;
    expect_bad(bad, "dropout");
}

TEST_CASE("method names round-trip") {
    for (auto m : {Method::Gcn, Method::Random, Method::Tgd, Method::HcRef, Method::Hc1, Method::Hc2, Method::ConsH,
                   Method::ConsD, Method::HcUncon})
        CHECK(method_from_string(to_string(m)) == m);
}

TEST_CASE("run directory contents") {
    fixtures::TempDir tmp("run");
    const auto g = fixtures::synthetic(30, 17);
    const auto cfg = small_config();
    int calls = 0;
    const auto r = train_hcref(g, cfg, [&](int, int, const hcref::model::ModelParams&) -> std::optional<double> {
        ++calls;
        return 0.5;
    });
    CHECK(calls == 12);
    write_run(r, cfg, tmp.path());
    for (const char* f : {"params.json", "params_phase1.json", "params_phase2.json", "params_phase3.json",
                          "run_log.csv", "config.json"})
        CHECK(std::filesystem::exists(tmp / f));
    const auto csv = fixtures::read_text(tmp / "run_log.csv");
    CHECK(csv.rfind("epoch,phase,L_CE,R_adv,attack_loss,acc_under_attack\n", 0) == 0);
    CHECK(csv.find(",0.5\n") != std::string::npos);
    const auto j = nlohmann::json::parse(fixtures::read_text(tmp / "config.json"));
    CHECK(j.at("code_version") == kCodeVersion);
    CHECK(j.at("rng") == std::string(hcref::Rng::kAlgorithm));
    CHECK(j.at("seed") == cfg.seed);
    const auto loaded = hcref::model::load_params(tmp / "params.json");
    CHECK(encoder_equal(loaded, r.params));
    CHECK(head_equal(loaded, r.params));
}
