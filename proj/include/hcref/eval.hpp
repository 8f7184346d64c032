#pragma once

// Metrics and the experiment harness: accuracy on clean or perturbed graphs,
// attack success rate, robustness sweeps, misclassification grids, ablation
// series and regularization-weight sweeps. Every table is re-measured.

#include "hcref/attack.hpp"
#include "hcref/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hcref::eval {

using attack::FlipSet;
using graphio::Graph;
using model::ModelParams;
using model::NodeSet;
using train::Method;
using train::RunConfig;

/// Test-time perturbations applied to a fixed, trained model.
enum class AttackKind { Clean, CePgd, CwPgd, Random, Dice };

const char* to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct EvalAttack {
    AttackKind kind = AttackKind::CePgd;
    double epsilon = 0.05;
    int iterations = 100;
    attack::VictimMode victims = attack::VictimMode::TrainLabeled;
    double lambda = 1.0;
    std::optional<double> mu0;  // 200 for CE, 0.1 for CW when unset
    double mu_decay_exponent = 2.0;
    double cw_kappa = 0.0;
    int samples = 20;
    std::uint64_t seed = 0;
    model::HeadActivation head = model::HeadActivation::Relu;
};

/// Attack settings inherited from a run config (victims, step sizes, head).
EvalAttack eval_attack_from(const RunConfig& cfg, AttackKind kind, double epsilon, int iterations);

/// Victim nodes and the labels their loss uses for a given mode.
std::pair<NodeSet, std::vector<int>> victim_set(const ModelParams& params, const Graph& g, attack::VictimMode mode,
                                                model::HeadActivation head);

/// Flips produced by the configured attack (empty for Clean).
FlipSet run_attack(const ModelParams& params, const Graph& g, const EvalAttack& a);

/// Predictions on the clean graph, or on the graph with `flips` applied.
std::vector<int> predictions(const ModelParams& params, const Graph& g, const FlipSet* flips,
                             model::HeadActivation head = model::HeadActivation::Relu);

/// Accuracy on `nodes` (the test split when empty).
double evaluate(const ModelParams& params, const Graph& g, const FlipSet* flips, const NodeSet& nodes = {},
                model::HeadActivation head = model::HeadActivation::Relu);

struct SuccessRate {
    double omega = 0.0;  // may be negative when the perturbation helps
    std::int64_t wrong_before = 0;
    std::int64_t wrong_after = 0;
    std::int64_t num_nodes = 0;
};

/// (misclassified after - misclassified before) / N over the test split.
SuccessRate attack_success_rate(const ModelParams& params, const Graph& g, const FlipSet& flips,
                                model::HeadActivation head = model::HeadActivation::Relu);

// ---------------------------------------------------------------------------
// report.json

struct EvalReport {
    double clean_acc = 0.0;
    std::map<std::string, double> attacked_acc;  // "<attack>@<epsilon>"
    std::map<std::string, double> omega;
    std::vector<std::vector<double>> misclass_grid;
    std::optional<std::vector<double>> series;
    nlohmann::json metadata = nlohmann::json::object();
};

std::string attack_key(AttackKind k, double epsilon);
nlohmann::json to_json(const EvalReport& r);

// ---------------------------------------------------------------------------
// Harness

/// Runs jobs 0..n-1 on at most `threads` workers; results are written by
/// index so output order never depends on scheduling. The first exception
/// thrown by a job is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job);

/// Worker count from HCREF_THREADS (default 1).
int thread_count_from_env();

/// Trains `cfg` (the harness's train entry point; swappable in tests).
using TrainFn = std::function<ModelParams(const Graph&, const RunConfig&)>;
ModelParams default_train(const Graph& g, const RunConfig& cfg);

struct Row {
    std::string method;
    std::string attack;
    double epsilon = 0.0;
    std::string seed;  // a seed, or "mean" / "std"
    double accuracy = 0.0;
};

struct SweepGrid {
    std::vector<Method> methods;
    std::vector<AttackKind> attacks{AttackKind::CePgd, AttackKind::CwPgd};
    std::vector<double> epsilons{0.05, 0.10, 0.15, 0.20};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int attack_iters = 100;
    /// Train each model with its cell's epsilon; otherwise base.epsilon.
    bool match_train_epsilon = true;
    RunConfig base;
};

nlohmann::json to_json(const SweepGrid& g);
SweepGrid sweep_grid_from_json(const nlohmann::json& j, const RunConfig& base = {});

/// Per-seed rows followed by mean and std rows for every (method, attack, eps).
std::vector<Row> robustness_sweep(const Graph& g, const SweepGrid& grid, int threads = 1,
                                  const TrainFn& trainer = default_train);
void write_rows_csv(std::ostream& os, const std::vector<Row>& rows);

struct MisclassGrid {
    std::vector<double> train_eps;
    std::vector<double> attack_eps;
    /// percent[i][j]: misclassification (%) of the model trained at
    /// train_eps[j] under attack_eps[i]; averaged over seeds.
    std::vector<std::vector<double>> percent;
    std::vector<double> column_average;
};

/// Train epsilon 0 means plain GCN; attack epsilon 0 means the clean graph.
MisclassGrid misclassification_grid(const Graph& g, const std::vector<double>& train_eps,
                                    const std::vector<double>& attack_eps, const RunConfig& base,
                                    const std::vector<std::uint64_t>& seeds, int attack_iters = 100, int threads = 1,
                                    const TrainFn& trainer = default_train);
void write_grid_csv(std::ostream& os, const MisclassGrid& grid);

struct Series {
    Method method = Method::HcRef;
    std::uint64_t seed = 0;
    std::vector<double> accuracy;  // one entry per adversarial epoch
    double tail_mean = 0.0;        // mean over the last epochs_per_phase entries
};

/// Accuracy on the test split under the series attack of `base` after every
/// adversarial epoch. gcn has no adversarial epochs and gives a flat line.
std::vector<Series> ablation_series(const Graph& g, const std::vector<Method>& methods, const RunConfig& base,
                                    const std::vector<std::uint64_t>& seeds, int threads = 1);
void write_series_csv(std::ostream& os, const std::vector<Series>& series);
double tail_mean(const std::vector<double>& v, std::size_t tail);

enum class SweepParam { Alpha, Beta };

struct HyperRow {
    SweepParam param = SweepParam::Alpha;
    double value = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
};

/// Varies alpha or beta with the other held at `other` (0.05), trains hcref
/// and reports test accuracy under `atk`.
std::vector<HyperRow> hyperparam_sweep(const Graph& g, SweepParam param, const std::vector<double>& values,
                                       const RunConfig& base, const EvalAttack& atk,
                                       const std::vector<std::uint64_t>& seeds, double other = 0.05, int threads = 1,
                                       const TrainFn& trainer = default_train);
void write_hyper_csv(std::ostream& os, const std::vector<HyperRow>& rows);

}  // namespace hcref::eval
