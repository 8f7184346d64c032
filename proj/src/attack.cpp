#include "hcref/attack.hpp"

#include "hcref/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace hcref::attack {

const char* to_string(AttackLoss k) { return k == AttackLoss::CE ? "ce" : "cw"; }

AttackLoss attack_loss_from_string(const std::string& s) {
    if (s == "ce" || s == "CE" || s == "ce-pgd") return AttackLoss::CE;
    if (s == "cw" || s == "CW" || s == "cw-pgd") return AttackLoss::CW;
    throw std::invalid_argument("unknown attack loss '" + s + "' (expected ce or cw)");
}

const char* to_string(VictimMode m) {
    switch (m) {
        case VictimMode::TrainLabeled: return "train";
        case VictimMode::TestTrueLabels: return "test-with-true-labels";
        case VictimMode::AllPseudoLabels: return "all-with-pseudo-labels";
    }
    return "?";
}

VictimMode victim_mode_from_string(const std::string& s) {
    if (s == "train") return VictimMode::TrainLabeled;
    if (s == "test-with-true-labels") return VictimMode::TestTrueLabels;
    if (s == "all-with-pseudo-labels") return VictimMode::AllPseudoLabels;
    throw std::invalid_argument("unknown victim mode '" + s + "'");
}

Vector FlipSet::to_binary() const {
    Vector v = Vector::Zero(pair_count(num_nodes));
    for (auto p : pairs) v[p] = 1.0;
    return v;
}

std::int64_t flip_budget(double epsilon, std::size_t num_edges) {
    return static_cast<std::int64_t>(std::floor(epsilon * static_cast<double>(num_edges)));
}

Tensor relaxed_adjacency(const Tensor& a, const Vector& s) {
    const auto n = a.rows();
    if (s.size() != pair_count(n)) throw std::invalid_argument("relaxed_adjacency: perturbation length mismatch");
    Tensor out = a;
    out.diagonal().setZero();
    Eigen::Index p = 0;
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = u + 1; v < n; ++v, ++p) {
            const double x = a(u, v) + (1.0 - 2.0 * a(u, v)) * s[p];
            out(u, v) = x;
            out(v, u) = x;
        }
    return out;
}

Tensor apply_flips(const Tensor& a, const FlipSet& flips) {
    Tensor out = a;
    for (auto p : flips.pairs) {
        const auto [u, v] = pair_at(p, flips.num_nodes);
        out(u, v) = 1.0 - out(u, v);
        out(v, u) = out(u, v);
    }
    return out;
}

std::vector<Edge> apply_flips(std::int64_t num_nodes, const std::vector<Edge>& edges, const FlipSet& flips) {
    // pair-index order coincides with lexicographic (u, v) order
    std::vector<Edge> flipped;
    flipped.reserve(flips.size());
    for (auto p : flips.pairs) flipped.push_back(pair_at(p, num_nodes));
    std::vector<Edge> out;
    out.reserve(edges.size() + flipped.size());
    std::set_symmetric_difference(edges.begin(), edges.end(), flipped.begin(), flipped.end(), std::back_inserter(out));
    return out;
}

// ---------------------------------------------------------------------------

Projection project_budget(const Vector& a, double budget, double tol) {
    if (!(budget > 0.0)) throw std::invalid_argument("project_budget: budget must be positive");
    Projection out;
    out.s = a.cwiseMax(0.0).cwiseMin(1.0);
    if (out.s.sum() <= budget) return out;

    auto clipped_sum = [&](double mu) { return (a.array() - mu).cwiseMax(0.0).cwiseMin(1.0).sum(); };
    // invariant: lo is infeasible (sum > budget), hi is feasible; returning
    // hi keeps the output feasible, so projecting it again is a no-op, and
    // on flat stretches of the clipped sum it picks the smallest shift
    double lo = 0.0;
    double hi = a.maxCoeff();
    constexpr int kMaxIterations = 100;
    bool converged = false;
    for (int it = 1; it <= kMaxIterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        out.iterations = it;
        if (clipped_sum(mid) > budget)
            lo = mid;
        else
            hi = mid;
        if (budget - clipped_sum(hi) <= tol && hi - lo <= tol) {
            converged = true;
            break;
        }
    }
    const double mu = hi;
    if (!converged) {
        std::ostringstream os;
        os.precision(17);
        os << "project_budget: bisection did not converge in " << kMaxIterations << " iterations, bracket [" << lo << ", "
           << hi << "]";
        throw ProjectionError(os.str());
    }
    out.mu = mu;
    out.s = (a.array() - mu).cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

// ---------------------------------------------------------------------------

AttackObjective::AttackObjective(const ModelParams& params, const Graph& graph, AttackLoss loss, NodeSet victims,
                                 std::vector<int> labels, double cw_kappa, model::HeadActivation head)
    : params_(params),
      graph_(graph),
      kind_(loss),
      victims_(std::move(victims)),
      labels_(std::move(labels)),
      kappa_(cw_kappa),
      head_(head),
      num_pairs_(pair_count(graph.num_nodes)) {
    if (static_cast<std::int64_t>(labels_.size()) != graph.num_nodes)
        throw std::invalid_argument("attack labels must cover every node");
    const auto n = graph.num_nodes;
    const grad::NodeId s = tape_.input("s", num_pairs_, 1);
    if (victims_.empty()) {
        loss_node_ = tape_.constant(Tensor::Zero(1, 1));
        return;
    }
    Tensor a = graphio::dense_adjacency(graph);
    Tensor flip_dir = graphio::complement_mask(a) - a;
    const grad::NodeId a_node = tape_.constant(std::move(a));
    const grad::NodeId dir_node = tape_.constant(std::move(flip_dir));
    const grad::NodeId relaxed = tape_.add(a_node, tape_.hadamard(dir_node, tape_.sym_from_pairs(s, n)));
    const grad::NodeId looped = tape_.add_identity(relaxed);
    const grad::NodeId dinv = tape_.pow(tape_.row_sum(looped), -0.5);
    const grad::NodeId a_hat = tape_.scale_rows(dinv, tape_.scale_cols(looped, dinv));

    const grad::NodeId xw1 = tape_.constant(Tensor(graph.features * params.W1));
    const auto p = model::constant_params(tape_, params);
    const auto out = model::build_forward(tape_, model::AdjOperand::of(a_hat), xw1, p, head, xw1);
    loss_node_ = kind_ == AttackLoss::CE ? model::build_ce_loss(tape_, out.Z, labels_, victims_)
                                         : model::build_cw_margin(tape_, out.Z, labels_, victims_, kappa_);
}

namespace {
grad::NamedTensors s_input(const Vector& s) {
    return {{"s", Tensor(Eigen::Map<const Tensor>(s.data(), s.size(), 1))}};
}
}  // namespace

double AttackObjective::loss(const Vector& s) const {
    if (s.size() != num_pairs_) throw std::invalid_argument("perturbation length mismatch");
    return grad::forward(tape_, s_input(s)).scalar(loss_node_);
}

std::pair<double, Vector> AttackObjective::loss_and_gradient(const Vector& s) const {
    if (s.size() != num_pairs_) throw std::invalid_argument("perturbation length mismatch");
    const auto ev = grad::forward(tape_, s_input(s));
    const Tensor g = grad::grad(tape_, ev, loss_node_, {"s"}).at("s");
    return {ev.scalar(loss_node_), Vector(Eigen::Map<const Vector>(g.data(), g.size()))};
}

double AttackObjective::loss(const FlipSet& flips) const {
    if (victims_.empty()) return 0.0;
    const auto edges = apply_flips(graph_.num_nodes, graph_.edges, flips);
    const auto a_hat = graphio::normalize_adjacency(graphio::adjacency_from_edges(graph_.num_nodes, edges));
    const auto out = model::forward(params_, a_hat, graph_.features, head_);
    return kind_ == AttackLoss::CE ? model::ce_loss(out.Z, labels_, victims_)
                                   : model::cw_margin(out.Z, labels_, victims_, kappa_);
}

Vector attack_gradient(const ModelParams& params, const Graph& graph, const PerturbVector& s, AttackLoss loss,
                       const NodeSet& victims, const std::vector<int>& labels, double cw_kappa,
                       model::HeadActivation head) {
    AttackObjective obj(params, graph, loss, victims, labels, cw_kappa, head);
    return obj.loss_and_gradient(s.s).second;
}

PerturbVector pgd_attack(const AttackObjective& obj, std::int64_t budget, const PgdConfig& cfg, PgdTrace* trace) {
    PerturbVector out;
    out.num_nodes = 0;
    out.budget = budget;
    out.s = Vector::Zero(obj.num_pairs());
    // recover n from the pair count
    out.num_nodes = static_cast<std::int64_t>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * double(obj.num_pairs()))) / 2.0));
    if (trace) *trace = {};
    if (cfg.iterations <= 0 || budget <= 0) {
        if (trace) trace->objective.push_back(obj.objective(obj.loss(out.s)));
        return out;
    }

    const double sign = obj.kind() == AttackLoss::CE ? 1.0 : -1.0;
    Vector s = out.s;
    Vector best = s;
    double best_obj = -std::numeric_limits<double>::infinity();
    int best_it = 0;
    for (int t = 1; t <= cfg.iterations; ++t) {
        auto [raw, g] = obj.loss_and_gradient(s);
        const double cur = obj.objective(raw);
        if (trace) trace->objective.push_back(cur);
        if (cur > best_obj) {
            best_obj = cur;
            best = s;
            best_it = t - 1;
        }
        const double mu = cfg.mu0 / std::pow(static_cast<double>(t + 1), cfg.mu_decay_exponent);
        s = project_budget(s + (cfg.lr * mu * sign) * g, static_cast<double>(budget)).s;
    }
    const double last = obj.objective(obj.loss(s));
    if (trace) trace->objective.push_back(last);
    if (!cfg.track_best || last >= best_obj) {
        best = s;
        best_it = cfg.iterations;
    }
    if (trace) trace->best_iteration = best_it;
    out.s = std::move(best);
    return out;
}

FlipSet sample_flips(const PerturbVector& s, std::int64_t budget, int samples, Rng& rng,
                     const std::function<double(const FlipSet&)>& objective) {
    FlipSet result;
    result.num_nodes = s.num_nodes;
    std::vector<std::int64_t> support;
    for (Eigen::Index p = 0; p < s.s.size(); ++p)
        if (s.s[p] > 0.0) support.push_back(p);

    std::map<std::vector<std::int64_t>, double> seen;
    double best_obj = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (int k = 0; k < samples; ++k) {
        FlipSet draw;
        draw.num_nodes = s.num_nodes;
        for (auto p : support)
            if (rng.bernoulli(s.s[p])) draw.pairs.push_back(p);
        if (static_cast<std::int64_t>(draw.size()) > budget) continue;
        auto it = seen.find(draw.pairs);
        const double value = it != seen.end() ? it->second : objective(draw);
        seen.emplace(draw.pairs, value);
        if (!found || value > best_obj) {
            best_obj = value;
            result = std::move(draw);
            found = true;
        }
    }
    if (found) return result;

    std::stable_sort(support.begin(), support.end(), [&](auto x, auto y) { return s.s[x] > s.s[y]; });
    if (static_cast<std::int64_t>(support.size()) > budget) support.resize(static_cast<std::size_t>(std::max<std::int64_t>(budget, 0)));
    std::sort(support.begin(), support.end());
    result.pairs = std::move(support);
    return result;
}

FlipSet generate_flips(const ModelParams& params, const Graph& graph, const PgdConfig& cfg, const NodeSet& victims,
                       const std::vector<int>& labels, PgdTrace* trace) {
    AttackObjective obj(params, graph, cfg.loss, victims, labels, cfg.cw_kappa, cfg.head);
    const auto budget = flip_budget(cfg.epsilon, graph.num_edges());
    const auto s = pgd_attack(obj, budget, cfg, trace);
    Rng rng(cfg.seed, "sampling");
    return sample_flips(s, budget, cfg.samples, rng, [&](const FlipSet& f) { return obj.objective(obj.loss(f)); });
}

// ---------------------------------------------------------------------------

namespace {
FlipSet flips_from_edges(std::int64_t n, std::vector<Edge> pairs) {
    FlipSet f;
    f.num_nodes = n;
    for (const auto& [u, v] : pairs) f.pairs.push_back(pair_index(u, v, n));
    std::sort(f.pairs.begin(), f.pairs.end());
    return f;
}

// take a uniformly random element out of `pool` (order not preserved)
template <typename T>
T take_random(std::vector<T>& pool, Rng& rng) {
    const auto k = rng.below(pool.size());
    std::swap(pool[k], pool.back());
    T x = pool.back();
    pool.pop_back();
    return x;
}
}  // namespace

BaselineResult random_attack(const Graph& graph, std::int64_t budget, Rng& rng) {
    BaselineResult r;
    r.requested = budget;
    std::vector<Edge> pool = graph.edges;
    std::vector<Edge> chosen;
    while (static_cast<std::int64_t>(chosen.size()) < budget && !pool.empty()) chosen.push_back(take_random(pool, rng));
    r.applied = static_cast<std::int64_t>(chosen.size());
    r.flips = flips_from_edges(graph.num_nodes, std::move(chosen));
    return r;
}

BaselineResult dice_attack(const Graph& graph, std::int64_t budget, Rng& rng) {
    BaselineResult r;
    r.requested = budget;
    const auto n = graph.num_nodes;
    std::vector<Edge> deletions;
    for (const auto& e : graph.edges)
        if (graph.labels[e.first] == graph.labels[e.second]) deletions.push_back(e);
    std::vector<Edge> additions;
    {
        std::size_t k = 0;
        for (std::int64_t u = 0; u < n; ++u)
            for (std::int64_t v = u + 1; v < n; ++v) {
                while (k < graph.edges.size() && graph.edges[k] < Edge{u, v}) ++k;
                const bool is_edge = k < graph.edges.size() && graph.edges[k] == Edge{u, v};
                if (!is_edge && graph.labels[u] != graph.labels[v]) additions.emplace_back(u, v);
            }
    }
    std::vector<Edge> chosen;
    while (static_cast<std::int64_t>(chosen.size()) < budget && (!deletions.empty() || !additions.empty())) {
        bool remove = rng.bernoulli(0.5);
        if (remove && deletions.empty()) remove = false;
        if (!remove && additions.empty()) remove = true;
        chosen.push_back(take_random(remove ? deletions : additions, rng));
    }
    r.applied = static_cast<std::int64_t>(chosen.size());
    r.flips = flips_from_edges(n, std::move(chosen));
    return r;
}

// ---------------------------------------------------------------------------

void write_flips(const std::filesystem::path& file, const Graph& graph, const FlipSet& flips) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    for (auto p : flips.pairs) {
        const auto e = pair_at(p, graph.num_nodes);
        const bool exists = std::binary_search(graph.edges.begin(), graph.edges.end(), e);
        os << e.first << '\t' << e.second << '\t' << (exists ? "del" : "add") << '\n';
    }
}

FlipSet read_flips(const std::filesystem::path& file, const Graph& graph) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw FlipsFormatError("missing flips file " + file.string());
    const auto n = graph.num_nodes;
    FlipSet f;
    f.num_nodes = n;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = file.filename().string() + ":" + std::to_string(lineno);
        std::istringstream ls(line);
        std::int64_t u = -1, v = -1;
        std::string op, extra;
        if (!(ls >> u >> v >> op) || (ls >> extra)) throw FlipsFormatError("expected 'u<TAB>v<TAB>op' at " + where);
        if (u < 0 || v < 0 || u >= n || v >= n) throw FlipsFormatError("node outside [0," + std::to_string(n) + ") at " + where);
        if (u == v) throw FlipsFormatError("self-loop flip at " + where);
        if (u > v) std::swap(u, v);
        const bool exists = std::binary_search(graph.edges.begin(), graph.edges.end(), Edge{u, v});
        if (op == "del" && !exists) throw FlipsFormatError("del of a non-edge at " + where);
        if (op == "add" && exists) throw FlipsFormatError("add of an existing edge at " + where);
        if (op != "del" && op != "add") throw FlipsFormatError("unknown op '" + op + "' at " + where);
        f.pairs.push_back(pair_index(u, v, n));
    }
    std::sort(f.pairs.begin(), f.pairs.end());
    if (std::adjacent_find(f.pairs.begin(), f.pairs.end()) != f.pairs.end())
        throw FlipsFormatError("duplicate pair in " + file.string());
    return f;
}

}  // namespace hcref::attack
