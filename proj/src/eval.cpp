#include "hcref/eval.hpp"

#include "hcref/format.hpp"
#include "hcref/rng.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

namespace hcref::eval {

using json = nlohmann::json;

const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::Clean: return "clean";
        case AttackKind::CePgd: return "ce-pgd";
        case AttackKind::CwPgd: return "cw-pgd";
        case AttackKind::Random: return "random";
        case AttackKind::Dice: return "dice";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "clean" || s == "none") return AttackKind::Clean;
    if (s == "ce-pgd" || s == "ce") return AttackKind::CePgd;
    if (s == "cw-pgd" || s == "cw") return AttackKind::CwPgd;
    if (s == "random") return AttackKind::Random;
    if (s == "dice") return AttackKind::Dice;
    throw std::invalid_argument("unknown attack '" + s + "'");
}

EvalAttack eval_attack_from(const RunConfig& cfg, AttackKind kind, double epsilon, int iterations) {
    EvalAttack a;
    a.kind = kind;
    a.epsilon = epsilon;
    a.iterations = iterations;
    a.victims = attack::VictimMode::TrainLabeled;
    a.lambda = cfg.lambda;
    a.mu0 = cfg.mu0;
    a.mu_decay_exponent = cfg.mu_decay_exponent;
    a.cw_kappa = cfg.cw_kappa;
    a.samples = cfg.samples;
    a.seed = cfg.seed;
    a.head = cfg.head;
    return a;
}

std::pair<NodeSet, std::vector<int>> victim_set(const ModelParams& params, const Graph& g, attack::VictimMode mode,
                                                model::HeadActivation head) {
    switch (mode) {
        case attack::VictimMode::TrainLabeled:
            return {NodeSet(g.splits.train.begin(), g.splits.train.end()), g.labels};
        case attack::VictimMode::TestTrueLabels:
            return {NodeSet(g.splits.test.begin(), g.splits.test.end()), g.labels};
        case attack::VictimMode::AllPseudoLabels: {
            NodeSet all(static_cast<std::size_t>(g.num_nodes));
            for (std::int64_t i = 0; i < g.num_nodes; ++i) all[i] = i;
            return {all, train::rst_labels(params, g, head).labels};
        }
    }
    throw std::logic_error("victim_set: bad mode");
}

FlipSet run_attack(const ModelParams& params, const Graph& g, const EvalAttack& a) {
    const auto budget = attack::flip_budget(a.epsilon, g.num_edges());
    switch (a.kind) {
        case AttackKind::Clean: return FlipSet{g.num_nodes, {}};
        case AttackKind::Random: {
            Rng rng(a.seed, "baseline-attacks");
            return attack::random_attack(g, budget, rng).flips;
        }
        case AttackKind::Dice: {
            Rng rng(a.seed, "baseline-attacks");
            return attack::dice_attack(g, budget, rng).flips;
        }
        case AttackKind::CePgd:
        case AttackKind::CwPgd: {
            attack::PgdConfig pc;
            pc.loss = a.kind == AttackKind::CePgd ? attack::AttackLoss::CE : attack::AttackLoss::CW;
            pc.epsilon = a.epsilon;
            pc.iterations = a.iterations;
            pc.lr = a.lambda;
            pc.mu0 = a.mu0 ? *a.mu0 : (pc.loss == attack::AttackLoss::CE ? 200.0 : 0.1);
            pc.mu_decay_exponent = a.mu_decay_exponent;
            pc.cw_kappa = a.cw_kappa;
            pc.samples = a.samples;
            pc.seed = a.seed;
            pc.head = a.head;
            const auto [victims, labels] = victim_set(params, g, a.victims, a.head);
            return attack::generate_flips(params, g, pc, victims, labels);
        }
    }
    throw std::logic_error("run_attack: bad kind");
}

std::vector<int> predictions(const ModelParams& params, const Graph& g, const FlipSet* flips,
                             model::HeadActivation head) {
    const auto edges = flips ? attack::apply_flips(g.num_nodes, g.edges, *flips) : g.edges;
    const auto adj = graphio::normalize_adjacency(graphio::adjacency_from_edges(g.num_nodes, edges));
    return model::predict(model::forward(params, adj, g.features, head).Z);
}

double evaluate(const ModelParams& params, const Graph& g, const FlipSet* flips, const NodeSet& nodes,
                model::HeadActivation head) {
    const auto pred = predictions(params, g, flips, head);
    if (nodes.empty()) return model::accuracy(pred, g.labels, NodeSet(g.splits.test.begin(), g.splits.test.end()));
    return model::accuracy(pred, g.labels, nodes);
}

SuccessRate attack_success_rate(const ModelParams& params, const Graph& g, const FlipSet& flips,
                                model::HeadActivation head) {
    const auto before = predictions(params, g, nullptr, head);
    const auto after = predictions(params, g, &flips, head);
    SuccessRate r;
    r.num_nodes = static_cast<std::int64_t>(g.splits.test.size());
    for (auto i : g.splits.test) {
        r.wrong_before += before[i] != g.labels[i];
        r.wrong_after += after[i] != g.labels[i];
    }
    if (r.num_nodes > 0) r.omega = static_cast<double>(r.wrong_after - r.wrong_before) / r.num_nodes;
    return r;
}

// ---------------------------------------------------------------------------

std::string attack_key(AttackKind k, double epsilon) { return std::string(to_string(k)) + "@" + sig6(epsilon); }

namespace {
// report numbers are rounded to 6 significant digits
double r6(double x) { return std::stod(sig6(x)); }
}  // namespace

json to_json(const EvalReport& r) {
    json j;
    j["clean_acc"] = r6(r.clean_acc);
    j["attacked_acc"] = json::object();
    for (const auto& [k, v] : r.attacked_acc) j["attacked_acc"][k] = r6(v);
    j["omega"] = json::object();
    for (const auto& [k, v] : r.omega) j["omega"][k] = r6(v);
    json grid = json::array();
    for (const auto& row : r.misclass_grid) {
        json jr = json::array();
        for (double v : row) jr.push_back(r6(v));
        grid.push_back(jr);
    }
    j["misclass_grid"] = grid;
    if (r.series) {
        json s = json::array();
        for (double v : *r.series) s.push_back(r6(v));
        j["series"] = s;
    } else {
        j["series"] = nullptr;
    }
    j["metadata"] = r.metadata;
    return j;
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                if (failed) return;
                const std::size_t i = next++;
                if (i >= n) return;
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first) first = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

int thread_count_from_env() {
    if (const char* s = std::getenv("HCREF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(s, &end, 10);
        if (end != s && *end == '\0' && v > 0) return static_cast<int>(v);
        throw std::invalid_argument(std::string("HCREF_THREADS must be a positive integer, got '") + s + "'");
    }
    return 1;
}

ModelParams default_train(const Graph& g, const RunConfig& cfg) { return train::train(g, cfg).params; }

// ---------------------------------------------------------------------------

namespace {

bool uses_train_attack(Method m) { return m != Method::Gcn && m != Method::Random; }

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    // population standard deviation over seeds
    sd = std::sqrt(ss / static_cast<double>(v.size()));
}

AttackKind kind_for(attack::AttackLoss l) { return l == attack::AttackLoss::CE ? AttackKind::CePgd : AttackKind::CwPgd; }

}  // namespace

json to_json(const SweepGrid& g) {
    json methods = json::array();
    for (auto m : g.methods) methods.push_back(train::to_string(m));
    json attacks = json::array();
    for (auto a : g.attacks) attacks.push_back(to_string(a));
    return {{"methods", methods},
            {"attacks", attacks},
            {"epsilons", g.epsilons},
            {"seeds", g.seeds},
            {"attack_iters", g.attack_iters},
            {"match_train_epsilon", g.match_train_epsilon},
            {"config", train::to_json(g.base)}};
}

SweepGrid sweep_grid_from_json(const json& j, const RunConfig& base) {
    if (!j.is_object()) throw std::invalid_argument("grid: top level must be an object");
    static const std::set<std::string> known = {"methods",      "attacks",             "epsilons", "seeds",
                                                "attack_iters", "match_train_epsilon", "config"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw std::invalid_argument("grid: unknown key '" + k + "'");
    SweepGrid g;
    g.base = j.contains("config") ? train::config_from_json(j.at("config"), base) : base;
    try {
        if (j.contains("methods"))
            for (const auto& m : j.at("methods")) g.methods.push_back(train::method_from_string(m.get<std::string>()));
        if (j.contains("attacks")) {
            g.attacks.clear();
            for (const auto& a : j.at("attacks")) g.attacks.push_back(attack_kind_from_string(a.get<std::string>()));
        }
        if (j.contains("epsilons")) g.epsilons = j.at("epsilons").get<std::vector<double>>();
        if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("attack_iters")) g.attack_iters = j.at("attack_iters").get<int>();
        if (j.contains("match_train_epsilon")) g.match_train_epsilon = j.at("match_train_epsilon").get<bool>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("grid: ") + e.what());
    }
    for (double e : g.epsilons)
        if (!(e > 0.0 && e < 1.0)) throw std::invalid_argument("grid: epsilons must lie in (0,1)");
    if (g.seeds.empty()) throw std::invalid_argument("grid: seeds must not be empty");
    return g;
}

std::vector<Row> robustness_sweep(const Graph& g, const SweepGrid& grid, int threads, const TrainFn& trainer) {
    std::vector<Row> rows;
    if (grid.methods.empty() || grid.attacks.empty() || grid.epsilons.empty()) return rows;

    // distinct trainings: (method, seed, train epsilon)
    using Key = std::tuple<int, std::uint64_t, double>;
    auto key_of = [&](Method m, std::uint64_t seed, double eps) -> Key {
        const double te = uses_train_attack(m) && grid.match_train_epsilon ? eps : grid.base.epsilon;
        return {static_cast<int>(m), seed, uses_train_attack(m) ? te : 0.0};
    };
    std::map<Key, std::size_t> index;
    std::vector<RunConfig> configs;
    for (auto m : grid.methods)
        for (auto seed : grid.seeds)
            for (double eps : grid.epsilons) {
                const Key k = key_of(m, seed, eps);
                if (index.count(k)) continue;
                RunConfig c = grid.base;
                c.method = m;
                c.seed = seed;
                if (uses_train_attack(m)) c.epsilon = std::get<2>(k);
                index[k] = configs.size();
                configs.push_back(c);
            }
    std::vector<ModelParams> models(configs.size());
    parallel_for(configs.size(), threads, [&](std::size_t i) { models[i] = trainer(g, configs[i]); });

    struct Cell {
        Method m;
        AttackKind a;
        double eps;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (auto m : grid.methods)
        for (auto a : grid.attacks)
            for (double eps : grid.epsilons)
                for (auto seed : grid.seeds) cells.push_back({m, a, eps, seed});
    std::vector<double> acc(cells.size());
    parallel_for(cells.size(), threads, [&](std::size_t i) {
        const auto& c = cells[i];
        const auto& cfg = configs[index.at(key_of(c.m, c.seed, c.eps))];
        const auto& params = models[index.at(key_of(c.m, c.seed, c.eps))];
        auto atk = eval_attack_from(cfg, c.a, c.eps, grid.attack_iters);
        atk.seed = c.seed;
        const auto flips = run_attack(params, g, atk);
        acc[i] = evaluate(params, g, &flips, {}, cfg.head);
    });

    const std::size_t S = grid.seeds.size();
    for (std::size_t i = 0; i < cells.size(); i += S) {
        std::vector<double> group;
        for (std::size_t k = 0; k < S; ++k) {
            const auto& c = cells[i + k];
            rows.push_back({train::to_string(c.m), to_string(c.a), c.eps, std::to_string(c.seed), acc[i + k]});
            group.push_back(acc[i + k]);
        }
        double mean, sd;
        mean_std(group, mean, sd);
        const auto& c = cells[i];
        rows.push_back({train::to_string(c.m), to_string(c.a), c.eps, "mean", mean});
        rows.push_back({train::to_string(c.m), to_string(c.a), c.eps, "std", sd});
    }
    return rows;
}

void write_rows_csv(std::ostream& os, const std::vector<Row>& rows) {
    os << "method,attack,epsilon,seed,accuracy\n";
    for (const auto& r : rows)
        os << r.method << ',' << r.attack << ',' << sig6(r.epsilon) << ',' << r.seed << ',' << sig6(r.accuracy) << '\n';
}

// ---------------------------------------------------------------------------

MisclassGrid misclassification_grid(const Graph& g, const std::vector<double>& train_eps,
                                    const std::vector<double>& attack_eps, const RunConfig& base,
                                    const std::vector<std::uint64_t>& seeds, int attack_iters, int threads,
                                    const TrainFn& trainer) {
    if (seeds.empty()) throw std::invalid_argument("misclassification_grid: no seeds");
    MisclassGrid out;
    out.train_eps = train_eps;
    out.attack_eps = attack_eps;
    const std::size_t J = train_eps.size(), I = attack_eps.size(), S = seeds.size();

    std::vector<RunConfig> configs(J * S);
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t s = 0; s < S; ++s) {
            RunConfig c = base;
            c.seed = seeds[s];
            if (train_eps[j] <= 0.0) {
                c.method = Method::Gcn;
            } else {
                if (c.method == Method::Gcn) c.method = Method::HcRef;
                c.epsilon = train_eps[j];
            }
            configs[j * S + s] = c;
        }
    std::vector<ModelParams> models(configs.size());
    parallel_for(configs.size(), threads, [&](std::size_t i) { models[i] = trainer(g, configs[i]); });

    std::vector<double> mis(I * J * S);
    parallel_for(mis.size(), threads, [&](std::size_t k) {
        const std::size_t i = k / (J * S), js = k % (J * S);
        const auto& cfg = configs[js];
        FlipSet flips{g.num_nodes, {}};
        if (attack_eps[i] > 0.0) {
            auto atk = eval_attack_from(cfg, AttackKind::CePgd, attack_eps[i], attack_iters);
            flips = run_attack(models[js], g, atk);
        }
        mis[k] = 100.0 * (1.0 - evaluate(models[js], g, &flips, {}, cfg.head));
    });

    out.percent.assign(I, std::vector<double>(J, 0.0));
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j) {
            double sum = 0.0;
            for (std::size_t s = 0; s < S; ++s) sum += mis[i * J * S + j * S + s];
            out.percent[i][j] = sum / static_cast<double>(S);
        }
    out.column_average.assign(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t i = 0; i < I; ++i) out.column_average[j] += out.percent[i][j];
        if (I > 0) out.column_average[j] /= static_cast<double>(I);
    }
    return out;
}

void write_grid_csv(std::ostream& os, const MisclassGrid& grid) {
    os << "attack_epsilon";
    for (double e : grid.train_eps) os << ",train_" << sig6(e);
    os << '\n';
    for (std::size_t i = 0; i < grid.attack_eps.size(); ++i) {
        os << sig6(grid.attack_eps[i]);
        for (double v : grid.percent[i]) os << ',' << sig6(v);
        os << '\n';
    }
    os << "average";
    for (double v : grid.column_average) os << ',' << sig6(v);
    os << '\n';
}

// ---------------------------------------------------------------------------

double tail_mean(const std::vector<double>& v, std::size_t tail) {
    if (v.empty()) return 0.0;
    const std::size_t k = std::min(tail, v.size());
    double s = 0.0;
    for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
    return s / static_cast<double>(k);
}

std::vector<Series> ablation_series(const Graph& g, const std::vector<Method>& methods, const RunConfig& base,
                                    const std::vector<std::uint64_t>& seeds, int threads) {
    std::vector<Series> out;
    for (auto m : methods)
        for (auto s : seeds) out.push_back({m, s, {}, 0.0});

    parallel_for(out.size(), threads, [&](std::size_t i) {
        auto& ser = out[i];
        RunConfig cfg = base;
        cfg.method = ser.method;
        cfg.seed = ser.seed;
        cfg.record_series = true;
        auto measure = [&](int epoch, const ModelParams& p) {
            auto atk = eval_attack_from(cfg, kind_for(cfg.series_attack_loss), cfg.series_epsilon,
                                        cfg.series_attack_iters);
            atk.victims = cfg.series_victims;
            atk.seed = Rng(cfg.seed, "series/epoch/" + std::to_string(epoch)).next_u64();
            const auto flips = run_attack(p, g, atk);
            return evaluate(p, g, &flips, {}, cfg.head);
        };
        const int n_epochs = 2 * cfg.epochs_per_phase;
        if (ser.method == Method::Gcn) {
            const auto p = train::train_phase1(g, cfg);
            ser.accuracy.assign(static_cast<std::size_t>(n_epochs), measure(cfg.epochs_per_phase, p));
        } else {
            train::EpochHook hook = [&](int epoch, int, const ModelParams& p) -> std::optional<double> {
                const double a = measure(epoch, p);
                ser.accuracy.push_back(a);
                return a;
            };
            train::train(g, cfg, hook);
        }
        ser.tail_mean = tail_mean(ser.accuracy, static_cast<std::size_t>(cfg.epochs_per_phase));
    });
    return out;
}

void write_series_csv(std::ostream& os, const std::vector<Series>& series) {
    os << "method,epoch,accuracy\n";
    // one line per epoch: mean over the seeds of each method
    std::map<std::string, std::vector<const Series*>> by_method;
    std::vector<std::string> order;
    for (const auto& s : series) {
        const std::string name = train::to_string(s.method);
        if (!by_method.count(name)) order.push_back(name);
        by_method[name].push_back(&s);
    }
    for (const auto& name : order) {
        const auto& group = by_method[name];
        const std::size_t len = group.front()->accuracy.size();
        for (std::size_t e = 0; e < len; ++e) {
            double sum = 0.0;
            for (const auto* s : group) sum += s->accuracy.at(e);
            os << name << ',' << (e + 1) << ',' << sig6(sum / static_cast<double>(group.size())) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<HyperRow> hyperparam_sweep(const Graph& g, SweepParam param, const std::vector<double>& values,
                                       const RunConfig& base, const EvalAttack& atk,
                                       const std::vector<std::uint64_t>& seeds, double other, int threads,
                                       const TrainFn& trainer) {
    std::vector<HyperRow> rows;
    for (double v : values)
        for (auto s : seeds) {
            HyperRow r;
            r.param = param;
            r.value = v;
            r.alpha = param == SweepParam::Alpha ? v : other;
            r.beta = param == SweepParam::Beta ? v : other;
            r.seed = s;
            rows.push_back(r);
        }
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        auto& r = rows[i];
        RunConfig cfg = base;
        cfg.method = Method::HcRef;
        cfg.alpha = r.alpha;
        cfg.beta = r.beta;
        cfg.seed = r.seed;
        const auto params = trainer(g, cfg);
        EvalAttack a = atk;
        a.seed = r.seed;
        const auto flips = run_attack(params, g, a);
        r.accuracy = evaluate(params, g, &flips, {}, cfg.head);
    });
    return rows;
}

void write_hyper_csv(std::ostream& os, const std::vector<HyperRow>& rows) {
    os << "param,value,alpha,beta,seed,accuracy\n";
    for (const auto& r : rows)
        os << (r.param == SweepParam::Alpha ? "alpha" : "beta") << ',' << sig6(r.value) << ',' << sig6(r.alpha) << ','
           << sig6(r.beta) << ',' << r.seed << ',' << sig6(r.accuracy) << '\n';
}

}  // namespace hcref::eval
