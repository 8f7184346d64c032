#include "hcref/train.hpp"

#include "hcref/format.hpp"
#include "hcref/rng.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace hcref::train {

using json = nlohmann::json;
using grad::NodeId;
using grad::Tape;
using grad::Tensor;

namespace {

struct MethodName {
    Method m;
    const char* name;
};

constexpr MethodName kMethods[] = {
    {Method::Gcn, "gcn"},     {Method::Random, "random"}, {Method::Tgd, "tgd"},
    {Method::HcRef, "hcref"}, {Method::Hc1, "hc1"},       {Method::Hc2, "hc2"},
    {Method::ConsH, "cons_h"}, {Method::ConsD, "cons_d"}, {Method::HcUncon, "hc_uncon"},
};

}  // namespace

const char* to_string(Method m) {
    for (const auto& e : kMethods)
        if (e.m == m) return e.name;
    return "?";
}

Method method_from_string(const std::string& s) {
    for (const auto& e : kMethods)
        if (s == e.name) return e.m;
    throw std::invalid_argument("unknown method '" + s + "'");
}

double RunConfig::resolved_mu0(attack::AttackLoss loss) const {
    if (mu0) return *mu0;
    return loss == attack::AttackLoss::CE ? 200.0 : 0.1;
}

double RunConfig::resolved_mu0() const { return resolved_mu0(attack_loss); }

void RunConfig::validate() const {
    auto bad = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
    if (!(epsilon > 0.0 && epsilon < 1.0)) bad("epsilon must lie in (0,1)");
    if (epochs_per_phase <= 0) bad("epochs_per_phase must be positive");
    if (alpha < 0.0) bad("alpha must be >= 0");
    if (beta < 0.0) bad("beta must be >= 0");
    if (T_atk < 0) bad("T_atk must be >= 0");
    if (!(lambda > 0.0)) bad("lambda must be positive");
    if (!(lr > 0.0)) bad("lr must be positive");
    if (weight_decay < 0.0) bad("weight_decay must be >= 0");
    if (hidden <= 0) bad("hidden must be positive");
    if (samples <= 0) bad("samples must be positive");
    if (dropout != 0.0) bad("dropout is fixed at 0.0");
    if (random_del_rate < 0.0 || random_del_rate >= 1.0) bad("random_del_rate must lie in [0,1)");
    if (!(series_epsilon > 0.0 && series_epsilon < 1.0)) bad("series_epsilon must lie in (0,1)");
    if (series_attack_iters < 0) bad("series_attack_iters must be >= 0");
}

json to_json(const RunConfig& c) {
    json j = {
        {"dataset", c.dataset},
        {"method", to_string(c.method)},
        {"epsilon", c.epsilon},
        {"T_atk", c.T_atk},
        {"lambda", c.lambda},
        {"mu0", c.resolved_mu0()},
        {"mu_decay_exponent", c.mu_decay_exponent},
        {"attack_loss", attack::to_string(c.attack_loss)},
        {"cw_kappa", c.cw_kappa},
        {"samples", c.samples},
        {"track_best", c.track_best},
        {"alpha", c.alpha},
        {"beta", c.beta},
        {"detach_natural", c.detach_natural},
        {"mean_reduce", c.mean_reduce},
        {"head", c.head == model::HeadActivation::Relu ? "relu" : "linear"},
        {"epochs_per_phase", c.epochs_per_phase},
        {"lr", c.lr},
        {"weight_decay", c.weight_decay},
        {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
        {"dropout", c.dropout},
        {"hidden", c.hidden},
        {"seed", c.seed},
        {"random_del_rate", c.random_del_rate},
        {"record_series", c.record_series},
        {"series_attack_loss", attack::to_string(c.series_attack_loss)},
        {"series_epsilon", c.series_epsilon},
        {"series_attack_iters", c.series_attack_iters},
        {"series_victims", attack::to_string(c.series_victims)},
    };
    return j;
}

RunConfig config_from_json(const json& in, RunConfig c) {
    if (!in.is_object()) throw std::invalid_argument("config: top level must be an object");
    // nested sections ("attack": {...}, "train": {...}, "loss": {...}) are
    // accepted and read as flat keys
    json flat = json::object();
    for (const auto& [k, v] : in.items()) {
        if ((k == "attack" || k == "train" || k == "loss") && v.is_object()) {
            for (const auto& [k2, v2] : v.items()) flat[k2] = v2;
        } else {
            flat[k] = v;
        }
    }
    static const std::set<std::string> known = {
        "dataset", "method", "epsilon", "T_atk", "lambda", "mu0", "mu_decay_exponent", "attack_loss",
        "cw_kappa", "samples", "track_best", "alpha", "beta", "detach_natural", "mean_reduce", "head",
        "epochs_per_phase", "lr", "weight_decay", "optimizer", "dropout", "hidden", "seed", "random_del_rate",
        "record_series", "series_attack_loss", "series_epsilon", "series_attack_iters", "series_victims",
        "code_version", "rng"};
    for (const auto& [k, v] : flat.items())
        if (!known.count(k)) throw std::invalid_argument("config: unknown key '" + k + "'");

    try {
        auto get = [&](const char* key, auto& field) {
            if (flat.contains(key)) field = flat.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("dataset", c.dataset);
        if (flat.contains("method")) c.method = method_from_string(flat.at("method").get<std::string>());
        get("epsilon", c.epsilon);
        get("T_atk", c.T_atk);
        get("lambda", c.lambda);
        if (flat.contains("mu0") && !flat.at("mu0").is_null()) c.mu0 = flat.at("mu0").get<double>();
        get("mu_decay_exponent", c.mu_decay_exponent);
        if (flat.contains("attack_loss")) c.attack_loss = attack::attack_loss_from_string(flat.at("attack_loss").get<std::string>());
        get("cw_kappa", c.cw_kappa);
        get("samples", c.samples);
        get("track_best", c.track_best);
        get("alpha", c.alpha);
        get("beta", c.beta);
        get("detach_natural", c.detach_natural);
        get("mean_reduce", c.mean_reduce);
        if (flat.contains("head")) {
            const auto h = flat.at("head").get<std::string>();
            if (h == "relu")
                c.head = model::HeadActivation::Relu;
            else if (h == "linear")
                c.head = model::HeadActivation::Linear;
            else
                throw std::invalid_argument("config: head must be relu or linear");
        }
        get("epochs_per_phase", c.epochs_per_phase);
        get("lr", c.lr);
        get("weight_decay", c.weight_decay);
        if (flat.contains("optimizer")) {
            const auto o = flat.at("optimizer").get<std::string>();
            if (o == "adam")
                c.optimizer = OptimizerKind::Adam;
            else if (o == "sgd")
                c.optimizer = OptimizerKind::Sgd;
            else
                throw std::invalid_argument("config: optimizer must be adam or sgd");
        }
        get("dropout", c.dropout);
        get("hidden", c.hidden);
        get("seed", c.seed);
        get("random_del_rate", c.random_del_rate);
        get("record_series", c.record_series);
        if (flat.contains("series_attack_loss"))
            c.series_attack_loss = attack::attack_loss_from_string(flat.at("series_attack_loss").get<std::string>());
        get("series_epsilon", c.series_epsilon);
        get("series_attack_iters", c.series_attack_iters);
        if (flat.contains("series_victims"))
            c.series_victims = attack::victim_mode_from_string(flat.at("series_victims").get<std::string>());
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    return c;
}

TrainingDiverged::TrainingDiverged(int epoch, const std::string& phase)
    : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) + " of " + phase),
      epoch_(epoch) {}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double lr, double weight_decay) : kind_(kind), lr_(lr), wd_(weight_decay) {}

void Optimizer::update(Tensor& param, const Tensor& g_raw, const std::string& name, bool decay) {
    Tensor g = g_raw;
    if (decay && wd_ > 0.0) g += wd_ * param;
    if (kind_ == OptimizerKind::Sgd) {
        param -= lr_ * g;
        return;
    }
    auto& st = state_[name];
    if (st.m.size() == 0) {
        st.m = Tensor::Zero(param.rows(), param.cols());
        st.v = Tensor::Zero(param.rows(), param.cols());
    }
    st.m = beta1_ * st.m + (1.0 - beta1_) * g;
    st.v = beta2_ * st.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    param.array() -= lr_ * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + eps_);
}

void Optimizer::step(ModelParams& p, const grad::NamedTensors& grads, const Trainable& which) {
    ++step_;
    if (which.encoder) {
        update(p.W1, grads.at(model::kW1), model::kW1, true);
        update(p.W2, grads.at(model::kW2), model::kW2, true);
    }
    if (which.head) {
        update(p.w, grads.at(model::kHeadW), model::kHeadW, true);
        update(p.b, grads.at(model::kHeadB), model::kHeadB, false);
    }
}

namespace {

std::vector<std::string> trainable_names(const Trainable& t) {
    std::vector<std::string> names;
    if (t.encoder) {
        names.push_back(model::kW1);
        names.push_back(model::kW2);
    }
    if (t.head) {
        names.push_back(model::kHeadW);
        names.push_back(model::kHeadB);
    }
    return names;
}

model::NodeSet all_nodes(const Graph& g) {
    model::NodeSet v(static_cast<std::size_t>(g.num_nodes));
    for (std::int64_t i = 0; i < g.num_nodes; ++i) v[i] = i;
    return v;
}

std::shared_ptr<const grad::SparseMatrix> clean_adj_hat(const Graph& g) {
    return std::make_shared<const grad::SparseMatrix>(graphio::normalize_adjacency(graphio::adjacency(g)));
}

struct StepResult {
    double loss_ce = 0.0;
    double reg = 0.0;
    grad::NamedTensors grads;
};

// One loss/gradient evaluation of CE(f(A_adv), labels on nodes) + coef * KL.
StepResult loss_and_grads(const ModelParams& p, const std::shared_ptr<const Tensor>& x,
                          const std::shared_ptr<const grad::SparseMatrix>& adv_adj,
                          const std::shared_ptr<const grad::SparseMatrix>& clean_adj, const std::vector<int>& labels,
                          const model::NodeSet& ce_nodes, const model::NodeSet& kl_nodes, Smoothness smooth,
                          double coef, const RunConfig& cfg, const Trainable& which) {
    Tape tape;
    const auto params = model::declare_params(tape, p.d(), p.h(), p.C());
    const NodeId xn = tape.constant(x);
    const auto adv = model::build_forward(tape, model::AdjOperand::of(adv_adj), xn, params, cfg.head);
    const NodeId ce = model::build_ce_loss(tape, adv.Z, labels, ce_nodes, cfg.mean_reduce);
    NodeId total = ce;
    std::optional<NodeId> reg;
    if (smooth != Smoothness::None) {
        NodeId nat_rep;
        if (cfg.detach_natural) {
            const auto nat = model::forward(p, *clean_adj, *x, cfg.head);
            nat_rep = tape.constant(smooth == Smoothness::Hidden ? nat.H : nat.Z);
        } else {
            const auto nat = model::build_forward(tape, model::AdjOperand::of(clean_adj), xn, params, cfg.head);
            nat_rep = smooth == Smoothness::Hidden ? nat.H : nat.Z;
        }
        const NodeId adv_rep = smooth == Smoothness::Hidden ? adv.H : adv.Z;
        reg = model::build_kl_smooth(tape, adv_rep, nat_rep, kl_nodes, cfg.mean_reduce);
        total = tape.add(ce, tape.scale(*reg, coef));
    }
    const auto ev = grad::forward(tape, model::param_inputs(p));
    StepResult r;
    r.loss_ce = ev.scalar(ce);
    r.reg = reg ? ev.scalar(*reg) : 0.0;
    r.grads = grad::grad(tape, ev, total, trainable_names(which));
    return r;
}

ModelParams with_freeze(ModelParams p, const Trainable& t) {
    p.freeze_encoder = !t.encoder;
    p.freeze_head = !t.head;
    return p;
}

std::uint64_t epoch_seed(std::uint64_t seed, const char* stream, int epoch) {
    return Rng(seed, std::string(stream) + "/epoch/" + std::to_string(epoch)).next_u64();
}

}  // namespace

ModelParams train_phase1(const Graph& g, const RunConfig& cfg, RunLog* log) {
    ModelParams p = model::init_params(cfg.seed, g.num_features, cfg.hidden, g.num_classes);
    if (cfg.epochs_per_phase <= 0) return p;
    const auto x = std::make_shared<const Tensor>(g.features);
    const auto adj = clean_adj_hat(g);
    const model::NodeSet train(g.splits.train.begin(), g.splits.train.end());
    const Trainable all;
    Optimizer opt(cfg.optimizer, cfg.lr, cfg.weight_decay);
    for (int e = 1; e <= cfg.epochs_per_phase; ++e) {
        StepResult r;
        try {
            r = loss_and_grads(p, x, adj, adj, g.labels, train, {}, Smoothness::None, 0.0, cfg, all);
        } catch (const grad::NonFiniteError&) {
            throw TrainingDiverged(e, "phase 1");
        }
        if (!std::isfinite(r.loss_ce)) throw TrainingDiverged(e, "phase 1");
        opt.step(p, r.grads, all);
        if (log) log->push_back({e, 1, r.loss_ce, 0.0, 0.0, 0, std::nullopt});
    }
    return p;
}

SoftLabels rst_labels(const ModelParams& phase1, const Graph& g, model::HeadActivation head) {
    const auto out = model::forward(phase1, graphio::normalize_adjacency(graphio::adjacency(g)), g.features, head);
    SoftLabels s;
    s.labels = model::predict(out.Z);
    s.pseudo.assign(s.labels.size(), 1);
    for (auto i : g.splits.train) {
        s.labels[i] = g.labels[i];
        s.pseudo[i] = 0;
    }
    return s;
}

namespace {

struct StageOptions {
    bool random_drop = false;       // random edge deletion instead of PGD
    bool ce_on_train_only = false;  // CE on the labeled split only
};

ModelParams run_stage_impl(ModelParams params, const Graph& g, const std::vector<int>& labels, const RunConfig& cfg,
                           const AdversarialStage& stage, const StageOptions& opts, int first_epoch, RunLog* log,
                           const EpochHook& hook) {
    params = with_freeze(std::move(params), stage.trainable);
    const auto x = std::make_shared<const Tensor>(g.features);
    const auto clean = clean_adj_hat(g);
    const model::NodeSet everyone = all_nodes(g);
    const model::NodeSet train(g.splits.train.begin(), g.splits.train.end());
    const model::NodeSet& ce_nodes = opts.ce_on_train_only ? train : everyone;
    const std::int64_t budget = opts.random_drop ? attack::flip_budget(cfg.random_del_rate, g.num_edges())
                                                 : attack::flip_budget(cfg.epsilon, g.num_edges());
    Optimizer opt(cfg.optimizer, cfg.lr, cfg.weight_decay);
    const char* phase_name = stage.phase == 3 ? "phase 3" : "phase 2";

    for (int k = 0; k < stage.epochs; ++k) {
        const int epoch = first_epoch + k;
        attack::FlipSet flips;
        double attack_loss = 0.0;
        if (opts.random_drop) {
            Rng rng(epoch_seed(cfg.seed, "baseline-attacks", epoch), "random-drop");
            flips = attack::random_attack(g, budget, rng).flips;
        } else {
            attack::PgdConfig pc;
            pc.loss = cfg.attack_loss;
            pc.epsilon = cfg.epsilon;
            pc.iterations = cfg.T_atk;
            pc.lr = cfg.lambda;
            pc.mu0 = cfg.resolved_mu0();
            pc.mu_decay_exponent = cfg.mu_decay_exponent;
            pc.cw_kappa = cfg.cw_kappa;
            pc.samples = cfg.samples;
            pc.track_best = cfg.track_best;
            pc.seed = epoch_seed(cfg.seed, "attack", epoch);
            pc.head = cfg.head;
            try {
                attack::AttackObjective obj(params, g, pc.loss, train, labels, pc.cw_kappa, pc.head);
                const auto s = attack::pgd_attack(obj, budget, pc);
                Rng rng(pc.seed, "sampling");
                flips = attack::sample_flips(s, budget, pc.samples, rng,
                                             [&](const attack::FlipSet& f) { return obj.objective(obj.loss(f)); });
                attack_loss = obj.loss(flips);
            } catch (const grad::NonFiniteError&) {
                throw TrainingDiverged(epoch, phase_name);
            }
        }
        const auto adv_edges = attack::apply_flips(g.num_nodes, g.edges, flips);
        const auto adv = std::make_shared<const grad::SparseMatrix>(
            graphio::normalize_adjacency(graphio::adjacency_from_edges(g.num_nodes, adv_edges)));

        StepResult r;
        try {
            r = loss_and_grads(params, x, adv, clean, labels, ce_nodes, everyone, stage.smoothness, stage.coefficient,
                               cfg, stage.trainable);
        } catch (const grad::NonFiniteError&) {
            throw TrainingDiverged(epoch, phase_name);
        }
        if (!std::isfinite(r.loss_ce) || !std::isfinite(r.reg)) throw TrainingDiverged(epoch, phase_name);
        opt.step(params, r.grads, stage.trainable);

        LogRow row{epoch, stage.phase, r.loss_ce, r.reg, attack_loss, static_cast<std::int64_t>(flips.size()), std::nullopt};
        if (hook) row.acc_under_attack = hook(epoch, stage.phase, params);
        if (log) log->push_back(row);
    }
    return params;
}

}  // namespace

ModelParams run_adversarial_stage(ModelParams params, const Graph& g, const std::vector<int>& labels,
                                  const RunConfig& cfg, const AdversarialStage& stage, int first_epoch, RunLog* log,
                                  const EpochHook& hook) {
    return run_stage_impl(std::move(params), g, labels, cfg, stage, {}, first_epoch, log, hook);
}

ModelParams train_phase2(const ModelParams& params, const Graph& g, const SoftLabels& soft, const RunConfig& cfg,
                         RunLog* log, const EpochHook& hook) {
    AdversarialStage st{2, cfg.epochs_per_phase, {true, false}, Smoothness::Hidden, cfg.alpha};
    return run_adversarial_stage(params, g, soft.labels, cfg, st, cfg.epochs_per_phase + 1, log, hook);
}

ModelParams train_phase3(const ModelParams& params, const Graph& g, const SoftLabels& soft, const RunConfig& cfg,
                         RunLog* log, const EpochHook& hook) {
    AdversarialStage st{3, cfg.epochs_per_phase, {false, true}, Smoothness::Logits, cfg.beta};
    return run_adversarial_stage(params, g, soft.labels, cfg, st, 2 * cfg.epochs_per_phase + 1, log, hook);
}

int adversarial_epochs(const RunConfig& cfg) { return cfg.method == Method::Gcn ? 0 : 2 * cfg.epochs_per_phase; }

TrainResult train_hcref(const Graph& g, const RunConfig& cfg, const EpochHook& hook) {
    TrainResult r;
    r.phase1 = train_phase1(g, cfg, &r.log);
    r.params = r.phase1;
    if (cfg.method == Method::Gcn) return r;
    r.soft_labels = rst_labels(r.phase1, g, cfg.head);
    r.phase2 = train_phase2(r.phase1, g, *r.soft_labels, cfg, &r.log, hook);
    r.phase3 = train_phase3(*r.phase2, g, *r.soft_labels, cfg, &r.log, hook);
    r.params = *r.phase3;
    return r;
}

TrainResult train_variant(const Graph& g, const RunConfig& cfg, const EpochHook& hook) {
    TrainResult r;
    r.phase1 = train_phase1(g, cfg, &r.log);
    const int E = cfg.epochs_per_phase;
    const int first = E + 1;
    const Trainable all;
    const Trainable encoder_only{true, false};
    const Trainable head_only{false, true};

    auto soft = [&]() -> const std::vector<int>& {
        if (!r.soft_labels) r.soft_labels = rst_labels(r.phase1, g, cfg.head);
        return r.soft_labels->labels;
    };

    switch (cfg.method) {
        case Method::Random: {
            AdversarialStage st{2, 2 * E, all, Smoothness::None, 0.0};
            r.params = run_stage_impl(r.phase1, g, g.labels, cfg, st, {true, true}, first, &r.log, hook);
            break;
        }
        case Method::Tgd: {
            AdversarialStage st{2, 2 * E, all, Smoothness::None, 0.0};
            r.params = run_adversarial_stage(r.phase1, g, soft(), cfg, st, first, &r.log, hook);
            break;
        }
        case Method::Hc1: {
            AdversarialStage st{2, 2 * E, encoder_only, Smoothness::Hidden, cfg.alpha};
            r.phase2 = run_adversarial_stage(r.phase1, g, soft(), cfg, st, first, &r.log, hook);
            r.params = *r.phase2;
            break;
        }
        case Method::Hc2: {
            AdversarialStage st{3, 2 * E, head_only, Smoothness::Logits, cfg.beta};
            r.phase3 = run_adversarial_stage(r.phase1, g, soft(), cfg, st, first, &r.log, hook);
            r.params = *r.phase3;
            break;
        }
        case Method::ConsH: {
            AdversarialStage st{2, 2 * E, all, Smoothness::Hidden, cfg.alpha};
            r.params = run_adversarial_stage(r.phase1, g, soft(), cfg, st, first, &r.log, hook);
            break;
        }
        case Method::ConsD: {
            AdversarialStage st{2, 2 * E, all, Smoothness::Logits, cfg.beta};
            r.params = run_adversarial_stage(r.phase1, g, soft(), cfg, st, first, &r.log, hook);
            break;
        }
        case Method::HcUncon: {
            AdversarialStage st2{2, E, all, Smoothness::Hidden, cfg.alpha};
            r.phase2 = run_adversarial_stage(r.phase1, g, soft(), cfg, st2, first, &r.log, hook);
            AdversarialStage st3{3, E, all, Smoothness::Logits, cfg.beta};
            r.phase3 = run_adversarial_stage(*r.phase2, g, soft(), cfg, st3, first + E, &r.log, hook);
            r.params = *r.phase3;
            break;
        }
        default:
            throw std::invalid_argument(std::string("train_variant: method '") + to_string(cfg.method) +
                                        "' is not a variant");
    }
    return r;
}

TrainResult train(const Graph& g, const RunConfig& cfg, const EpochHook& hook) {
    if (cfg.method == Method::Gcn || cfg.method == Method::HcRef) return train_hcref(g, cfg, hook);
    return train_variant(g, cfg, hook);
}

// ---------------------------------------------------------------------------

json resolved_config_json(const RunConfig& cfg) {
    json j = to_json(cfg);
    j["code_version"] = kCodeVersion;
    j["rng"] = std::string(Rng::kAlgorithm);
    return j;
}

void write_config(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    std::ofstream os(run_dir / "config.json", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (run_dir / "config.json").string());
    os << resolved_config_json(cfg).dump(2) << "\n";
}

void write_log_csv(const RunLog& log, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << "epoch,phase,L_CE,R_adv,attack_loss,acc_under_attack\n";
    for (const auto& r : log) {
        os << r.epoch << ',' << r.phase << ',' << shortest_repr(r.loss_ce) << ',' << shortest_repr(r.reg) << ','
           << shortest_repr(r.attack_loss) << ',';
        if (r.acc_under_attack) os << shortest_repr(*r.acc_under_attack);
        os << '\n';
    }
}

void write_run(const TrainResult& r, const RunConfig& cfg, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    write_config(cfg, run_dir);
    model::save_params(r.params, run_dir / "params.json");
    model::save_params(r.phase1, run_dir / "params_phase1.json");
    if (r.phase2) model::save_params(*r.phase2, run_dir / "params_phase2.json");
    if (r.phase3) model::save_params(*r.phase3, run_dir / "params_phase3.json");
    write_log_csv(r.log, run_dir / "run_log.csv");
}

}  // namespace hcref::train
