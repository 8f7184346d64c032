#include "hcref/gradcheck.hpp"

#include "hcref/attack.hpp"
#include "hcref/model.hpp"
#include "hcref/pairs.hpp"

namespace hcref::gradcheck {

using grad::NodeId;
using grad::Tape;
using grad::Tensor;

graphio::Graph random_graph(std::int64_t n, int d, int C, Rng& rng) {
    graphio::Graph g;
    g.name = "fd-fixture";
    g.num_nodes = n;
    g.num_features = d;
    g.num_classes = C;
    g.features = Tensor(n, d);
    for (std::int64_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) g.features(i, k) = rng.uniform();
    for (std::int64_t u = 0; u < n; ++u)
        for (std::int64_t v = u + 1; v < n; ++v)
            if (rng.bernoulli(0.4)) g.edges.push_back({u, v});
    g.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) g.labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(C)));
    g.splits.train = {0, 1};
    g.splits.val = {2};
    for (std::int64_t i = 3; i < n; ++i) g.splits.test.push_back(i);
    return g;
}

namespace {

Tensor random_tensor(std::int64_t r, std::int64_t c, double scale, Rng& rng) {
    Tensor t(r, c);
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
    return t;
}

model::NodeSet all_nodes(std::int64_t n) {
    model::NodeSet v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

void check_inputs(std::vector<CheckResult>& out, const std::string& prefix, const Tape& tape, NodeId loss,
                  const grad::NamedTensors& inputs, const std::vector<std::string>& names,
                  const grad::FiniteDiffOptions& fd) {
    for (const auto& name : names) out.push_back({prefix + "/" + name, grad::finite_diff_check(tape, loss, inputs, name, fd)});
}

}  // namespace

std::vector<CheckResult> run_suite(const SuiteOptions& opts) {
    std::vector<CheckResult> out;
    Rng rng(opts.seed, "grad-check");
    const std::vector<std::string> all_params = {model::kW1, model::kW2, model::kHeadW, model::kHeadB};

    for (int gi = 0; gi < opts.graphs; ++gi) {
        const auto span = static_cast<std::uint64_t>(opts.max_nodes - opts.min_nodes + 1);
        const std::int64_t n = opts.min_nodes + static_cast<std::int64_t>(rng.below(span));
        const auto g = random_graph(n, opts.num_features, opts.num_classes, rng);
        auto params = model::init_params(rng.next_u64(), opts.num_features, opts.hidden, opts.num_classes);
        // positive head bias keeps the relu head mostly active, so the
        // checks see non-zero gradients
        params.b = random_tensor(1, opts.num_classes, 0.2, rng).array() + 0.5;
        params.w = random_tensor(opts.hidden, opts.num_classes, 1.0, rng);
        const std::string tag = std::to_string(gi);
        const auto everyone = all_nodes(n);

        // attack loss with respect to the relaxed flip vector
        Tensor s(pair_count(n), 1);
        for (std::int64_t i = 0; i < s.size(); ++i) s.data()[i] = 0.05 + 0.9 * rng.uniform();
        // kappa large enough that the margin clamp stays inactive
        for (auto kind : {attack::AttackLoss::CE, attack::AttackLoss::CW})
            for (auto head : {model::HeadActivation::Relu, model::HeadActivation::Linear}) {
                attack::AttackObjective obj(params, g, kind, everyone, g.labels, 10.0, head);
                check_inputs(out,
                             tag + "/attack-" + attack::to_string(kind) +
                                 (head == model::HeadActivation::Relu ? "-relu" : "-linear"),
                             obj.tape(), obj.loss_node(), {{"s", s}}, {"s"}, opts.fd);
            }

        // training losses with respect to the parameters
        const auto x = std::make_shared<const Tensor>(g.features);
        const auto clean = std::make_shared<const grad::SparseMatrix>(
            graphio::normalize_adjacency(graphio::adjacency(g)));
        attack::FlipSet flips{n, {}};
        for (std::int64_t p = 0; p < pair_count(n); ++p)
            if (rng.bernoulli(0.2)) flips.pairs.push_back(p);
        const auto adv = std::make_shared<const grad::SparseMatrix>(graphio::normalize_adjacency(
            graphio::adjacency_from_edges(n, attack::apply_flips(n, g.edges, flips))));
        const auto inputs = model::param_inputs(params);

        {
            Tape t;
            const auto p = model::declare_params(t, g.num_features, opts.hidden, opts.num_classes);
            const auto f = model::build_forward(t, model::AdjOperand::of(clean), t.constant(x), p,
                                                model::HeadActivation::Relu);
            const NodeId ce = model::build_ce_loss(t, f.Z, g.labels, everyone);
            check_inputs(out, tag + "/ce", t, ce, inputs, all_params, opts.fd);
        }
        for (auto head : {model::HeadActivation::Relu, model::HeadActivation::Linear}) {
            Tape t;
            const auto p = model::declare_params(t, g.num_features, opts.hidden, opts.num_classes);
            const auto f = model::build_forward(t, model::AdjOperand::of(clean), t.constant(x), p, head);
            const NodeId cw = model::build_cw_margin(t, f.Z, g.labels, everyone, 10.0);
            check_inputs(out, tag + (head == model::HeadActivation::Relu ? "/cw-relu" : "/cw-linear"), t, cw, inputs,
                         all_params, opts.fd);
        }
        for (bool hidden : {true, false}) {
            Tape t;
            const auto p = model::declare_params(t, g.num_features, opts.hidden, opts.num_classes);
            const NodeId xn = t.constant(x);
            const auto fa = model::build_forward(t, model::AdjOperand::of(adv), xn, p, model::HeadActivation::Relu);
            const auto fn = model::build_forward(t, model::AdjOperand::of(clean), xn, p, model::HeadActivation::Relu);
            const NodeId ce = model::build_ce_loss(t, fa.Z, g.labels, everyone);
            const NodeId kl = hidden ? model::build_kl_smooth(t, fa.H, fn.H, everyone)
                                     : model::build_kl_smooth(t, fa.Z, fn.Z, everyone);
            const NodeId total = t.add(ce, t.scale(kl, 2.0));
            check_inputs(out, tag + (hidden ? "/ce+kl-hidden" : "/ce+kl-logits"), t, total, inputs, all_params,
                         opts.fd);
        }
    }
    return out;
}

}  // namespace hcref::gradcheck
