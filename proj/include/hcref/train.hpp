#pragma once

// Training procedures: standard training, robust self-training labels, the
// hierarchical adversarial phases with freezing and KL smoothness terms, and
// the ablation / baseline variants built from the same pieces.

#include "hcref/attack.hpp"
#include "hcref/graphio.hpp"
#include "hcref/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcref::train {

using graphio::Graph;
using model::ModelParams;

enum class Method { Gcn, Random, Tgd, HcRef, Hc1, Hc2, ConsH, ConsD, HcUncon };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

enum class OptimizerKind { Adam, Sgd };

struct RunConfig {
    std::string dataset;
    Method method = Method::HcRef;

    // adversarial example generation during training
    double epsilon = 0.05;
    int T_atk = 40;
    double lambda = 1.0;
    std::optional<double> mu0;  // resolved: 200 for CE, 0.1 for CW
    double mu_decay_exponent = 2.0;
    attack::AttackLoss attack_loss = attack::AttackLoss::CE;
    double cw_kappa = 0.0;
    int samples = 20;
    bool track_best = true;

    // objectives
    double alpha = 16.0;
    double beta = 32.0;
    bool detach_natural = false;
    bool mean_reduce = false;
    model::HeadActivation head = model::HeadActivation::Relu;

    // optimization
    int epochs_per_phase = 120;
    double lr = 0.01;
    double weight_decay = 5e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double dropout = 0.0;
    int hidden = 32;
    std::uint64_t seed = 0;
    double random_del_rate = 0.05;

    // accuracy-under-attack series (ablation runs)
    bool record_series = false;
    attack::AttackLoss series_attack_loss = attack::AttackLoss::CE;
    double series_epsilon = 0.2;
    int series_attack_iters = 100;
    attack::VictimMode series_victims = attack::VictimMode::TrainLabeled;

    double resolved_mu0() const;
    double resolved_mu0(attack::AttackLoss loss) const;
    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, const std::string& phase);
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

struct SoftLabels {
    std::vector<int> labels;
    std::vector<char> pseudo;  // 1 where the label came from the model
};

struct LogRow {
    int epoch = 0;  // 1-based, counted across all phases of one run
    int phase = 0;  // 1, 2 or 3; baselines use 2 for their adversarial epochs
    double loss_ce = 0.0;
    double reg = 0.0;
    double attack_loss = 0.0;  // raw attack loss of the sampled perturbation
    std::int64_t flips = 0;
    std::optional<double> acc_under_attack;
};

using RunLog = std::vector<LogRow>;

struct TrainResult {
    ModelParams params;
    ModelParams phase1;
    std::optional<ModelParams> phase2;
    std::optional<ModelParams> phase3;
    std::optional<SoftLabels> soft_labels;
    RunLog log;
};

/// Called after every parameter update with the 1-based global epoch;
/// returning a value stores it as that epoch's accuracy under attack.
using EpochHook = std::function<std::optional<double>(int epoch, int phase, const ModelParams&)>;

/// Parameter groups receiving updates; frozen groups stay bit-identical.
struct Trainable {
    bool encoder = true;
    bool head = true;
};

/// Adam or plain descent with L2 weight decay on W1, W2 and w.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, double weight_decay);
    void step(ModelParams& p, const grad::NamedTensors& grads, const Trainable& which);

private:
    struct Moments {
        grad::Tensor m, v;
    };
    void update(grad::Tensor& param, const grad::Tensor& g, const std::string& name, bool decay);

    OptimizerKind kind_;
    double lr_, wd_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long step_ = 0;
    std::map<std::string, Moments> state_;
};

/// Minimizes CE on the labeled training nodes over the clean graph.
ModelParams train_phase1(const Graph& g, const RunConfig& cfg, RunLog* log = nullptr);

/// True labels on the training split, clean-graph predictions elsewhere.
SoftLabels rst_labels(const ModelParams& phase1, const Graph& g, model::HeadActivation head = model::HeadActivation::Relu);

/// Which representation the smoothness term compares.
enum class Smoothness { None, Hidden, Logits };

struct AdversarialStage {
    int phase = 2;
    int epochs = 0;
    Trainable trainable;
    Smoothness smoothness = Smoothness::None;
    double coefficient = 0.0;
};

/// Algorithm-1 style loop: per epoch, PGD from s = 0 against the current
/// parameters, Bernoulli rounding, one step on CE(f(A*), labels) + coef * KL.
ModelParams run_adversarial_stage(ModelParams params, const Graph& g, const std::vector<int>& labels,
                                  const RunConfig& cfg, const AdversarialStage& stage, int first_epoch, RunLog* log,
                                  const EpochHook& hook = {});

/// Head frozen, hidden-feature KL weighted by alpha.
ModelParams train_phase2(const ModelParams& params, const Graph& g, const SoftLabels& soft, const RunConfig& cfg,
                         RunLog* log = nullptr, const EpochHook& hook = {});
/// Encoder frozen, logit KL weighted by beta.
ModelParams train_phase3(const ModelParams& params, const Graph& g, const SoftLabels& soft, const RunConfig& cfg,
                         RunLog* log = nullptr, const EpochHook& hook = {});

TrainResult train_hcref(const Graph& g, const RunConfig& cfg, const EpochHook& hook = {});
/// Baselines and ablations: random, tgd, hc1, hc2, cons_h, cons_d, hc_uncon.
TrainResult train_variant(const Graph& g, const RunConfig& cfg, const EpochHook& hook = {});
/// Dispatches on cfg.method.
TrainResult train(const Graph& g, const RunConfig& cfg, const EpochHook& hook = {});

/// Number of adversarial epochs after phase 1 for a method (0 for gcn).
int adversarial_epochs(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Run directory: params.json, params_phase{1,2,3}.json, run_log.csv, config.json

inline constexpr const char* kCodeVersion = "hcref 1.0.0";

nlohmann::json resolved_config_json(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::filesystem::path& run_dir);
void write_run(const TrainResult& r, const RunConfig& cfg, const std::filesystem::path& run_dir);
void write_log_csv(const RunLog& log, const std::filesystem::path& file);

}  // namespace hcref::train
