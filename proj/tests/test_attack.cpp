#include "hcref/attack.hpp"

#include "fixtures.hpp"
#include "hcref/pairs.hpp"
#include "hcref/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace hcref::attack;
using fixtures::random_tensor;
using hcref::Rng;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

double clipped_sum(const Vector& a, double mu) { return (a.array() - mu).cwiseMax(0.0).cwiseMin(1.0).sum(); }

// Exact projection from the breakpoints of the piecewise-linear map
// mu -> sum clip(a - mu): solve the linear piece that crosses the budget.
Vector breakpoint_projection(const Vector& a, double budget) {
    if (a.cwiseMax(0.0).cwiseMin(1.0).sum() <= budget) return a.cwiseMax(0.0).cwiseMin(1.0);
    std::vector<double> bp{0.0};
    for (double x : a) {
        bp.push_back(x);
        bp.push_back(x - 1.0);
    }
    std::sort(bp.begin(), bp.end());
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
        const double lo = std::max(bp[k], 0.0), hi = bp[k + 1];
        if (hi <= lo) continue;
        const double flo = clipped_sum(a, lo), fhi = clipped_sum(a, hi);
        if (flo >= budget && fhi <= budget) {
            const double mu = flo == fhi ? lo : lo + (flo - budget) * (hi - lo) / (flo - fhi);
            return (a.array() - mu).cwiseMax(0.0).cwiseMin(1.0);
        }
    }
    FAIL("no crossing");
    return a;
}

hcref::model::ModelParams trained(const hcref::graphio::Graph& g, int epochs = 60) {
    hcref::train::RunConfig cfg;
    cfg.epochs_per_phase = epochs;
    cfg.hidden = 8;
    cfg.seed = 1;
    return hcref::train::train_phase1(g, cfg);
}

NodeSet train_nodes(const hcref::graphio::Graph& g) { return NodeSet(g.splits.train.begin(), g.splits.train.end()); }

}  // namespace

TEST_CASE("budget is the floor of epsilon times the edge count") {
    CHECK(flip_budget(0.05, 5429) == 271);
    CHECK(flip_budget(0.2, 10) == 2);
    CHECK(flip_budget(0.05, 10) == 0);
}

TEST_CASE("projection examples") {
    const auto p0 = project_budget(vec({0.2, 0.1}), 1.0);
    CHECK(p0.s == vec({0.2, 0.1}));
    CHECK(p0.mu == 0.0);

    const auto p1 = project_budget(vec({1.4, 0.3, -0.2}), 1.0);
    CHECK(p1.mu == doctest::Approx(0.3).epsilon(1e-5));
    CHECK((p1.s - vec({1.0, 0.0, 0.0})).cwiseAbs().maxCoeff() < 1e-5);

    const auto p2 = project_budget(vec({0.9, 0.8, 0.3}), 1.0);
    CHECK(p2.mu == doctest::Approx(0.35).epsilon(1e-5));
    CHECK((p2.s - vec({0.55, 0.45, 0.0})).cwiseAbs().maxCoeff() < 1e-5);
    // confirm on a coarse grid that mu = 0.35 is where the clipped sum hits 1
    CHECK(clipped_sum(vec({0.9, 0.8, 0.3}), 0.349) > 1.0);
    CHECK(clipped_sum(vec({0.9, 0.8, 0.3}), 0.351) < 1.0);
}

TEST_CASE("projection matches the exact breakpoint solution and is feasible and idempotent") {
    Rng rng(31, "proj");
    for (int trial = 0; trial < 500; ++trial) {
        const auto m = 1 + static_cast<Eigen::Index>(rng.below(12));
        Vector a(m);
        for (Eigen::Index i = 0; i < m; ++i) a[i] = -1.0 + 3.0 * rng.uniform();
        const double budget = 0.05 + (static_cast<double>(m) - 0.05) * rng.uniform();
        const auto p = project_budget(a, budget);
        CHECK((p.s - breakpoint_projection(a, budget)).cwiseAbs().maxCoeff() < 1e-5);
        CHECK(p.s.minCoeff() >= 0.0);
        CHECK(p.s.maxCoeff() <= 1.0);
        CHECK(p.s.sum() <= budget + 1e-6);
        CHECK((project_budget(p.s, budget).s - p.s).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("projection rejects invalid budgets") {
    CHECK_THROWS_AS(project_budget(vec({0.5}), 0.0), std::invalid_argument);
}

TEST_CASE("relaxed adjacency examples") {
    const auto g = fixtures::path3();
    const Tensor a = hcref::graphio::dense_adjacency(g);
    CHECK(relaxed_adjacency(a, Vector::Zero(3)) == a);
    Vector s = Vector::Zero(3);
    s[hcref::pair_index(0, 2, 3)] = 1.0;
    CHECK(relaxed_adjacency(a, s)(0, 2) == 1.0);
    CHECK(relaxed_adjacency(a, s)(2, 0) == 1.0);
    const Tensor half = relaxed_adjacency(Tensor::Zero(3, 3), Vector::Constant(3, 0.5));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(half(i, j) == (i == j ? 0.0 : 0.5));
}

TEST_CASE("apply_flips on the path graph") {
    const auto g = fixtures::path3();
    FlipSet f{3, {hcref::pair_index(0, 1, 3), hcref::pair_index(0, 2, 3)}};
    const auto edges = apply_flips(3, g.edges, f);
    CHECK(edges == std::vector<Edge>{{0, 2}, {1, 2}});
    CHECK(apply_flips(3, edges, f) == g.edges);
    CHECK(apply_flips(3, g.edges, FlipSet{3, {}}) == g.edges);
    const Tensor a = hcref::graphio::dense_adjacency(g);
    CHECK(apply_flips(a, f) == hcref::graphio::dense_adjacency(3, edges));
}

TEST_CASE("relaxed adjacency at binary s equals the flipped graph") {
    Rng rng(32, "flip");
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = fixtures::synthetic(8 + static_cast<int>(rng.below(5)), 100 + trial);
        const auto n = g.num_nodes;
        FlipSet f{n, {}};
        for (std::int64_t p = 0; p < hcref::pair_count(n); ++p)
            if (rng.bernoulli(0.2)) f.pairs.push_back(p);
        const Tensor a = hcref::graphio::dense_adjacency(g);
        CHECK(relaxed_adjacency(a, f.to_binary()) == apply_flips(a, f));
        CHECK(hcref::graphio::dense_adjacency(n, apply_flips(n, g.edges, f)) == apply_flips(a, f));
    }
}

TEST_CASE("sample_flips respects the budget and degenerate inputs") {
    Rng rng(33, "sample");
    auto count = [](const FlipSet& f) { return static_cast<double>(f.size()); };
    PerturbVector zero{5, 2, Vector::Zero(10)};
    CHECK(sample_flips(zero, 2, 20, rng, count).size() == 0);

    PerturbVector binary{5, 3, Vector::Zero(10)};
    binary.s[1] = binary.s[4] = 1.0;
    CHECK(sample_flips(binary, 3, 20, rng, count).pairs == std::vector<std::int64_t>{1, 4});

    PerturbVector half{5, 2, Vector::Zero(10)};
    for (int p : {0, 3, 5, 7}) half.s[p] = 0.5;
    for (int i = 0; i < 50; ++i) {
        const auto f = sample_flips(half, 2, 50, rng, count);
        CHECK(f.size() <= 2);
        for (auto p : f.pairs) CHECK(half.s[p] == 0.5);
    }
}

TEST_CASE("sample_flips falls back to the largest entries when every draw is over budget") {
    Rng rng(34, "fallback");
    PerturbVector s{6, 1, Vector::Constant(15, 0.999)};
    s.s[7] = 1.0;
    const auto f = sample_flips(s, 1, 3, rng, [](const FlipSet&) { return 0.0; });
    CHECK(f.pairs == std::vector<std::int64_t>{7});
}

TEST_CASE("attack gradient matches finite differences and flows through normalization") {
    const auto g = fixtures::synthetic(8, 41);
    const auto p = trained(g, 30);
    Rng rng(35, "ag");
    Tensor s = random_tensor(hcref::pair_count(8), 1, rng, 0.1, 0.9);
    for (auto kind : {AttackLoss::CE, AttackLoss::CW}) {
        AttackObjective obj(p, g, kind, train_nodes(g), g.labels, 5.0);
        const auto rep = hcref::grad::finite_diff_check(obj.tape(), obj.loss_node(), {{"s", s}}, "s");
        INFO(rep.summary());
        CHECK(rep.pass);
        CHECK(rep.max_abs_analytic > 0.0);
        PerturbVector pv{8, 3, Vector(Eigen::Map<const Vector>(s.data(), s.size()))};
        const Vector direct = attack_gradient(p, g, pv, kind, train_nodes(g), g.labels, 5.0);
        CHECK((direct - obj.loss_and_gradient(pv.s).second).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("an empty victim set gives a constant loss and zero gradient") {
    const auto g = fixtures::synthetic(8, 41);
    const auto p = trained(g, 5);
    PerturbVector pv{8, 3, Vector::Constant(hcref::pair_count(8), 0.3)};
    CHECK(attack_gradient(p, g, pv, AttackLoss::CE, {}, g.labels).isZero());
}

TEST_CASE("joining two different-class training nodes raises the CE loss") {
    const auto g = fixtures::synthetic(8, 42);
    const auto p = trained(g, 100);
    AttackObjective obj(p, g, AttackLoss::CE, train_nodes(g), g.labels);
    const auto n = g.num_nodes;
    bool found = false;
    for (auto u : g.splits.train)
        for (auto v : g.splits.train) {
            if (u >= v || g.labels[u] == g.labels[v]) continue;
            const auto pair = hcref::pair_index(u, v, n);
            if (hcref::graphio::dense_adjacency(g)(u, v) != 0.0) continue;
            Vector s = Vector::Zero(hcref::pair_count(n));
            const double base = obj.loss(s);
            const auto grad = obj.loss_and_gradient(s).second;
            s[pair] = 1e-3;
            CHECK(obj.loss(s) > base);
            CHECK(grad[pair] > 0.0);
            found = true;
        }
    CHECK(found);
}

TEST_CASE("pgd never ends below its starting point and respects the budget") {
    const auto g = fixtures::synthetic(12, 43);
    const auto p = trained(g, 60);
    for (auto kind : {AttackLoss::CE, AttackLoss::CW}) {
        AttackObjective obj(p, g, kind, train_nodes(g), g.labels);
        PgdConfig cfg;
        cfg.loss = kind;
        cfg.iterations = 30;
        cfg.mu0 = kind == AttackLoss::CE ? 200.0 : 0.1;
        const auto budget = std::max<std::int64_t>(1, flip_budget(0.2, g.num_edges()));
        PgdTrace trace;
        const auto s = pgd_attack(obj, budget, cfg, &trace);
        CHECK(trace.objective.size() == 31);
        CHECK(obj.objective(obj.loss(s.s)) >= obj.objective(obj.loss(Vector::Zero(s.s.size()))));
        CHECK(s.s.sum() <= budget + 1e-6);
        CHECK(s.s.minCoeff() >= 0.0);
        CHECK(s.s.maxCoeff() <= 1.0);
    }
}

TEST_CASE("pgd with zero iterations returns zero") {
    const auto g = fixtures::synthetic(10, 44);
    const auto p = trained(g, 5);
    AttackObjective obj(p, g, AttackLoss::CE, train_nodes(g), g.labels);
    PgdConfig cfg;
    cfg.iterations = 0;
    CHECK(pgd_attack(obj, 3, cfg).s.isZero());
}

TEST_CASE("generate_flips is deterministic and within budget") {
    const auto g = fixtures::synthetic(20, 45);
    const auto p = trained(g, 40);
    PgdConfig cfg;
    cfg.iterations = 20;
    cfg.epsilon = 0.2;
    cfg.seed = 9;
    const auto a = generate_flips(p, g, cfg, train_nodes(g), g.labels);
    const auto b = generate_flips(p, g, cfg, train_nodes(g), g.labels);
    CHECK(a.pairs == b.pairs);
    CHECK(static_cast<std::int64_t>(a.size()) <= flip_budget(0.2, g.num_edges()));
}

TEST_CASE("random attack deletes exactly the budget") {
    const auto g = fixtures::synthetic(30, 46);
    Rng rng(36, "baseline-attacks");
    const auto none = random_attack(g, 0, rng);
    CHECK(none.flips.size() == 0);
    for (std::int64_t b : {1, 3, 7}) {
        const auto r = random_attack(g, b, rng);
        CHECK(r.applied == b);
        const auto edges = apply_flips(g.num_nodes, g.edges, r.flips);
        CHECK(edges.size() == g.num_edges() - static_cast<std::size_t>(b));
        for (const auto& e : edges) CHECK(std::binary_search(g.edges.begin(), g.edges.end(), e));
    }
}

TEST_CASE("dice never joins same-label nodes nor removes cross-label edges") {
    const auto g = fixtures::synthetic(30, 47);
    Rng rng(37, "baseline-attacks");
    const auto r = dice_attack(g, 15, rng);
    CHECK(r.applied == 15);
    for (auto p : r.flips.pairs) {
        const auto [u, v] = hcref::pair_at(p, g.num_nodes);
        const bool existed = std::binary_search(g.edges.begin(), g.edges.end(), Edge{u, v});
        if (existed)
            CHECK(g.labels[u] == g.labels[v]);
        else
            CHECK(g.labels[u] != g.labels[v]);
    }
}

TEST_CASE("flips files round-trip and reject malformed input") {
    fixtures::TempDir tmp("flips");
    const auto g = fixtures::path3();
    FlipSet f{3, {hcref::pair_index(0, 1, 3), hcref::pair_index(0, 2, 3)}};
    write_flips(tmp / "f.tsv", g, f);
    CHECK(fixtures::read_text(tmp / "f.tsv") == "0\t1\tdel\n0\t2\tadd\n");
    CHECK(read_flips(tmp / "f.tsv", g).pairs == f.pairs);
    fixtures::write_text(tmp / "bad1.tsv", "0\t1\tadd\n");  // (0,1) exists, so not an addition
    CHECK_THROWS_AS(read_flips(tmp / "bad1.tsv", g), FlipsFormatError);
    fixtures::write_text(tmp / "bad2.tsv", "0\t7\tadd\n");
    CHECK_THROWS_AS(read_flips(tmp / "bad2.tsv", g), FlipsFormatError);
    fixtures::write_text(tmp / "bad3.tsv", "1\t1\tadd\n");
    CHECK_THROWS_AS(read_flips(tmp / "bad3.tsv", g), FlipsFormatError);
    fixtures::write_text(tmp / "bad4.tsv", "0\t2\tadd\n2\t0\tadd\n");
    CHECK_THROWS_AS(read_flips(tmp / "bad4.tsv", g), FlipsFormatError);
}
