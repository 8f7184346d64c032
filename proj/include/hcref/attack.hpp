#pragma once

// Topology attacks: a continuous relaxation over node-pair flips optimized by
// projected gradient steps under an edge-flip budget, Bernoulli rounding back
// to a binary flip set, and two heuristic baselines.

#include "hcref/graphio.hpp"
#include "hcref/model.hpp"
#include "hcref/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcref::attack {

using graphio::Edge;
using graphio::Graph;
using grad::Tensor;
using model::ModelParams;
using model::NodeSet;

using Vector = Eigen::VectorXd;

enum class AttackLoss { CE, CW };

const char* to_string(AttackLoss k);
AttackLoss attack_loss_from_string(const std::string& s);

/// Relaxed flip probabilities over all unordered pairs (pair order from
/// pairs.hpp).
struct PerturbVector {
    std::int64_t num_nodes = 0;
    std::int64_t budget = 0;
    Vector s;
};

/// Binary flip decision stored as the sorted list of flipped pair indices.
struct FlipSet {
    std::int64_t num_nodes = 0;
    std::vector<std::int64_t> pairs;

    std::size_t size() const { return pairs.size(); }
    Vector to_binary() const;
};

/// floor(epsilon * |E|) unordered flips.
std::int64_t flip_budget(double epsilon, std::size_t num_edges);

/// A + (complement(A) - A) o S(s), S the symmetric matrix built from s.
Tensor relaxed_adjacency(const Tensor& a, const Vector& s);

Tensor apply_flips(const Tensor& a, const FlipSet& flips);
std::vector<Edge> apply_flips(std::int64_t num_nodes, const std::vector<Edge>& edges, const FlipSet& flips);

// ---------------------------------------------------------------------------
// Projection

class ProjectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Projection {
    Vector s;
    double mu = 0.0;       // 0 when the clipped input was already feasible
    int iterations = 0;
};

/// Euclidean projection onto {s in [0,1]^m : sum(s) <= budget}, the shift mu
/// found by bisection on [0, max(a)]: the result satisfies
/// budget - tol <= sum(s) <= budget, with mu within tol of the smallest root.
Projection project_budget(const Vector& a, double budget, double tol = 1e-6);

// ---------------------------------------------------------------------------
// Attack objective

enum class VictimMode { TrainLabeled, TestTrueLabels, AllPseudoLabels };

const char* to_string(VictimMode m);
VictimMode victim_mode_from_string(const std::string& s);

/// Fixed-parameter view of the model as a function of the relaxed flip
/// vector. Owns one dense n x n adjacency tape; not for very large graphs.
/// Holds a reference to `graph`, which must outlive the objective.
class AttackObjective {
public:
    AttackObjective(const ModelParams& params, const Graph& graph, AttackLoss loss, NodeSet victims,
                    std::vector<int> labels, double cw_kappa = 0.0,
                    model::HeadActivation head = model::HeadActivation::Relu);

    /// Raw attack loss (CE or CW margin) at s.
    double loss(const Vector& s) const;
    /// Raw loss and its gradient with respect to s.
    std::pair<double, Vector> loss_and_gradient(const Vector& s) const;
    /// Raw loss on the graph with `flips` applied (sparse evaluation).
    double loss(const FlipSet& flips) const;

    /// Quantity the attacker maximizes: CE, or the negated CW margin.
    double objective(double raw_loss) const { return kind_ == AttackLoss::CE ? raw_loss : -raw_loss; }

    AttackLoss kind() const { return kind_; }
    std::int64_t num_pairs() const { return num_pairs_; }
    const grad::Tape& tape() const { return tape_; }
    grad::NodeId loss_node() const { return loss_node_; }

private:
    ModelParams params_;
    const Graph& graph_;
    AttackLoss kind_;
    NodeSet victims_;
    std::vector<int> labels_;
    double kappa_;
    model::HeadActivation head_;
    std::int64_t num_pairs_;
    grad::Tape tape_;
    grad::NodeId loss_node_ = 0;
};

/// Gradient of the raw attack loss with respect to s; flows through the
/// degree normalization. Empty victim sets give a zero gradient.
Vector attack_gradient(const ModelParams& params, const Graph& graph, const PerturbVector& s, AttackLoss loss,
                       const NodeSet& victims, const std::vector<int>& labels, double cw_kappa = 0.0,
                       model::HeadActivation head = model::HeadActivation::Relu);

struct PgdConfig {
    AttackLoss loss = AttackLoss::CE;
    double epsilon = 0.05;
    int iterations = 40;
    double lr = 1.0;
    double mu0 = 200.0;
    double mu_decay_exponent = 2.0;
    double cw_kappa = 0.0;
    int samples = 20;
    bool track_best = true;
    std::uint64_t seed = 0;
    model::HeadActivation head = model::HeadActivation::Relu;
};

struct PgdTrace {
    std::vector<double> objective;  // attacker objective at s^(0..T)
    int best_iteration = 0;
};

/// s^(t) = P(s^(t-1) + lr * mu0/(t+1)^p * g), g = +grad CE or -grad CW.
PerturbVector pgd_attack(const AttackObjective& obj, std::int64_t budget, const PgdConfig& cfg,
                         PgdTrace* trace = nullptr);

/// Draws `samples` Bernoulli(s) flip sets, drops those over budget and keeps
/// the one with the largest `objective`. Falls back to the top-budget
/// entries of s when no draw fits.
FlipSet sample_flips(const PerturbVector& s, std::int64_t budget, int samples, Rng& rng,
                     const std::function<double(const FlipSet&)>& objective);

/// PGD followed by Bernoulli rounding; the usual entry point.
FlipSet generate_flips(const ModelParams& params, const Graph& graph, const PgdConfig& cfg, const NodeSet& victims,
                       const std::vector<int>& labels, PgdTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Baselines

struct BaselineResult {
    FlipSet flips;
    std::int64_t requested = 0;
    std::int64_t applied = 0;
};

/// Deletes `budget` uniformly chosen existing edges.
BaselineResult random_attack(const Graph& graph, std::int64_t budget, Rng& rng);
/// Spends the budget on moves chosen uniformly between deleting a
/// same-label edge and adding a cross-label edge.
BaselineResult dice_attack(const Graph& graph, std::int64_t budget, Rng& rng);

// ---------------------------------------------------------------------------
// flips.tsv: `u<TAB>v<TAB>op`, op in {add, del}

class FlipsFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_flips(const std::filesystem::path& file, const Graph& graph, const FlipSet& flips);
FlipSet read_flips(const std::filesystem::path& file, const Graph& graph);

}  // namespace hcref::attack
