#include "hcref/cli.hpp"

#include "hcref/attack.hpp"
#include "hcref/eval.hpp"
#include "hcref/format.hpp"
#include "hcref/gradcheck.hpp"
#include "hcref/graphio.hpp"
#include "hcref/model.hpp"
#include "hcref/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace hcref::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using train::RunConfig;

namespace {

/// Bad invocation or configuration (exit 2).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void emit_error(std::ostream& err, const std::string& kind, const std::string& message) {
    err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

json read_json_file(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw UsageError("cannot open " + file.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw UsageError("malformed JSON in " + file.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& file, const json& j) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << j.dump(2) << "\n";
}

std::ofstream open_out(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    return os;
}

fs::path sidecar(const fs::path& out) { return fs::path(out.string() + ".config.json"); }

template <typename F>
auto as_usage(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

/// Flags shared by subcommands that take a run configuration.
struct ConfigFlags {
    std::string config;
    std::string data;
    std::optional<std::string> method;
    std::optional<double> epsilon;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> attack_loss;
    std::optional<int> attack_iters;
    std::optional<int> hidden;
    std::optional<double> lr;
    bool mean_reduce = false;
    bool detach_natural = false;

    void attach(CLI::App* app, bool with_config_file = true) {
        if (with_config_file) app->add_option("--config", config, "run configuration (JSON)")->check(CLI::ExistingFile);
        app->add_option("--data", data, "canonical dataset directory (overrides \"dataset\")");
        app->add_option("--method", method, "gcn|random|tgd|hcref|hc1|hc2|cons_h|cons_d|hc_uncon");
        app->add_option("--epsilon", epsilon, "training perturbation rate");
        app->add_option("--alpha", alpha, "hidden-feature smoothness weight");
        app->add_option("--beta", beta, "logit smoothness weight");
        app->add_option("--epochs", epochs, "epochs per phase");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--attack-loss", attack_loss, "training attack loss: ce|cw");
        app->add_option("--attack-iters", attack_iters, "attack iterations per training epoch");
        app->add_option("--hidden", hidden, "hidden width");
        app->add_option("--lr", lr, "learning rate");
        app->add_flag("--mean-reduce", mean_reduce, "average losses over nodes instead of summing");
        app->add_flag("--detach-natural", detach_natural, "no gradient through the clean branch of the KL term");
    }

    RunConfig resolve(RunConfig base = {}) const {
        return as_usage([&] {
            RunConfig c = config.empty() ? base : train::config_from_json(read_json_file(config), base);
            if (!data.empty()) c.dataset = data;
            if (method) c.method = train::method_from_string(*method);
            if (epsilon) c.epsilon = *epsilon;
            if (alpha) c.alpha = *alpha;
            if (beta) c.beta = *beta;
            if (epochs) c.epochs_per_phase = *epochs;
            if (seed) c.seed = *seed;
            if (attack_loss) c.attack_loss = attack::attack_loss_from_string(*attack_loss);
            if (attack_iters) c.T_atk = *attack_iters;
            if (hidden) c.hidden = *hidden;
            if (lr) c.lr = *lr;
            if (mean_reduce) c.mean_reduce = true;
            if (detach_natural) c.detach_natural = true;
            if (c.dataset.empty()) throw UsageError("no dataset: set \"dataset\" in the config or pass --data");
            c.validate();
            return c;
        });
    }
};

graphio::Graph load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) throw UsageError("dataset directory not found: " + dir);
    return graphio::load_graph(dir);
}

struct LoadedRun {
    RunConfig cfg;
    model::ModelParams params;
    graphio::Graph graph;
};

LoadedRun load_run(const fs::path& run_dir, const std::string& data_override) {
    LoadedRun r;
    r.cfg = as_usage([&] { return train::config_from_json(read_json_file(run_dir / "config.json")); });
    if (!data_override.empty()) r.cfg.dataset = data_override;
    if (!fs::exists(run_dir / "params.json")) throw UsageError("missing " + (run_dir / "params.json").string());
    r.params = model::load_params(run_dir / "params.json");
    r.graph = load_dataset(r.cfg.dataset);
    return r;
}

std::vector<double> parse_doubles(const std::vector<std::string>& v) {
    std::vector<double> out;
    for (const auto& s : v) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(s, &pos));
            if (pos != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw UsageError("not a number: '" + s + "'");
        }
    }
    return out;
}

int threads_from(int flag) { return flag > 0 ? flag : as_usage([] { return eval::thread_count_from_env(); }); }

// ---------------------------------------------------------------------------

struct PrepareArgs {
    std::string raw, out, name;
    int train_per_class = 20;
    std::int64_t train_size = -1;
    std::int64_t val_size = 500;
    bool drop_dangling = false;
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out) {
    graphio::PrepareOptions o;
    o.name = a.name;
    o.train_per_class = a.train_per_class;
    o.train_size = a.train_size;
    o.val_size = a.val_size;
    o.drop_dangling_citations = a.drop_dangling;
    write_json_file(fs::path(a.out) / "config.json",
                    {{"command", "prepare-data"},
                     {"raw", a.raw},
                     {"name", a.name},
                     {"train_per_class", a.train_per_class},
                     {"train_size", a.train_size},
                     {"val_size", a.val_size},
                     {"drop_dangling_citations", a.drop_dangling},
                     {"code_version", train::kCodeVersion}});
    const auto rep = graphio::prepare_dataset(a.raw, a.out, o);
    out << "nodes=" << rep.num_nodes << " edges=" << rep.num_edges << " citation_lines=" << rep.num_citation_lines
        << " dropped_self_loops=" << rep.dropped_self_loops << " dropped_duplicates=" << rep.dropped_duplicates
        << " dropped_dangling=" << rep.dropped_dangling << "\n";
    return kExitOk;
}

int cmd_train(const ConfigFlags& flags, const std::string& out_dir, std::ostream& out) {
    const RunConfig cfg = flags.resolve();
    train::write_config(cfg, out_dir);
    const auto g = load_dataset(cfg.dataset);
    const auto r = train::train(g, cfg);
    train::write_run(r, cfg, out_dir);
    out << "method=" << train::to_string(cfg.method) << " seed=" << cfg.seed
        << " clean_test_accuracy=" << sig6(eval::evaluate(r.params, g, nullptr, {}, cfg.head)) << "\n";
    return kExitOk;
}

struct AttackArgs {
    std::string run, out, data, method = "ce-pgd", victims = "train";
    double epsilon = 0.05;
    int iters = 100;
    std::optional<std::uint64_t> seed;
};

int cmd_attack(const AttackArgs& a, std::ostream& out) {
    auto run = load_run(a.run, a.data);
    auto atk = as_usage([&] {
        auto e = eval::eval_attack_from(run.cfg, eval::attack_kind_from_string(a.method), a.epsilon, a.iters);
        e.victims = attack::victim_mode_from_string(a.victims);
        if (!(a.epsilon > 0.0 && a.epsilon < 1.0)) throw std::invalid_argument("--epsilon must lie in (0,1)");
        if (a.iters < 0) throw std::invalid_argument("--iters must be >= 0");
        return e;
    });
    if (a.seed) atk.seed = *a.seed;
    write_json_file(sidecar(a.out), {{"command", "attack"},
                                     {"run", a.run},
                                     {"dataset", run.cfg.dataset},
                                     {"attack", eval::to_string(atk.kind)},
                                     {"epsilon", atk.epsilon},
                                     {"iterations", atk.iterations},
                                     {"victims", attack::to_string(atk.victims)},
                                     {"seed", atk.seed},
                                     {"run_config", train::resolved_config_json(run.cfg)}});
    const auto flips = eval::run_attack(run.params, run.graph, atk);
    attack::write_flips(a.out, run.graph, flips);
    out << "budget=" << attack::flip_budget(atk.epsilon, run.graph.num_edges()) << " flips=" << flips.size() << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string run, out, data, flips;
    std::vector<std::string> attacks;
    std::vector<std::string> epsilons;
    int iters = 100;
    std::string victims = "train";
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    auto run = load_run(a.run, a.data);
    const auto eps = parse_doubles(a.epsilons.empty() && !a.attacks.empty() ? std::vector<std::string>{"0.05"}
                                                                            : a.epsilons);
    std::vector<eval::AttackKind> kinds;
    for (const auto& s : a.attacks) kinds.push_back(as_usage([&] { return eval::attack_kind_from_string(s); }));
    const auto victims = as_usage([&] { return attack::victim_mode_from_string(a.victims); });

    eval::EvalReport rep;
    rep.metadata = {{"command", "evaluate"},
                    {"run", a.run},
                    {"flips", a.flips.empty() ? json(nullptr) : json(a.flips)},
                    {"attacks", a.attacks},
                    {"epsilons", eps},
                    {"attack_iters", a.iters},
                    {"victims", attack::to_string(victims)},
                    {"seeds", {run.cfg.seed}},
                    {"config", train::resolved_config_json(run.cfg)}};
    write_json_file(sidecar(a.out), rep.metadata);

    const auto head = run.cfg.head;
    rep.clean_acc = eval::evaluate(run.params, run.graph, nullptr, {}, head);
    if (!a.flips.empty()) {
        if (!fs::exists(a.flips)) throw UsageError("flips file not found: " + a.flips);
        const auto flips = attack::read_flips(a.flips, run.graph);
        rep.attacked_acc["flips"] = eval::evaluate(run.params, run.graph, &flips, {}, head);
        rep.omega["flips"] = eval::attack_success_rate(run.params, run.graph, flips, head).omega;
    }
    for (auto k : kinds)
        for (double e : eps) {
            auto atk = eval::eval_attack_from(run.cfg, k, e, a.iters);
            atk.victims = victims;
            const auto flips = eval::run_attack(run.params, run.graph, atk);
            const auto key = eval::attack_key(k, e);
            rep.attacked_acc[key] = eval::evaluate(run.params, run.graph, &flips, {}, head);
            rep.omega[key] = eval::attack_success_rate(run.params, run.graph, flips, head).omega;
        }
    write_json_file(a.out, eval::to_json(rep));
    out << "clean_acc=" << sig6(rep.clean_acc);
    for (const auto& [k, v] : rep.attacked_acc) out << " " << k << "=" << sig6(v);
    out << "\n";
    return kExitOk;
}

struct SweepArgs {
    std::string grid, out, data, kind = "robustness";
    int threads = 0;
};

std::vector<std::uint64_t> seeds_of(const json& j) {
    return j.contains("seeds") ? j.at("seeds").get<std::vector<std::uint64_t>>() : std::vector<std::uint64_t>{0, 1, 2};
}

void reject_unknown(const json& j, const std::set<std::string>& known) {
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw std::invalid_argument("grid: unknown key '" + k + "'");
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    const json j = read_json_file(a.grid);
    const int threads = threads_from(a.threads);
    const fs::path dir = a.out;
    auto base_from = [&](const json& jj) {
        RunConfig c = jj.contains("config") ? train::config_from_json(jj.at("config")) : RunConfig{};
        if (!a.data.empty()) c.dataset = a.data;
        if (c.dataset.empty()) throw UsageError("no dataset: set config.dataset in the grid or pass --data");
        c.validate();
        return c;
    };

    if (a.kind == "robustness") {
        const auto grid = as_usage([&] {
            auto g = eval::sweep_grid_from_json(j);
            g.base = base_from(j);
            return g;
        });
        write_json_file(dir / "config.json", {{"command", "sweep"}, {"kind", a.kind}, {"grid", eval::to_json(grid)},
                                              {"threads", threads}, {"code_version", train::kCodeVersion}});
        const auto g = load_dataset(grid.base.dataset);
        const auto rows = eval::robustness_sweep(g, grid, threads);
        auto os = open_out(dir / "robustness.csv");
        eval::write_rows_csv(os, rows);
        out << "rows=" << rows.size() << " -> " << (dir / "robustness.csv").string() << "\n";
        return kExitOk;
    }
    if (a.kind == "misclass") {
        struct M {
            RunConfig base;
            std::vector<double> train_eps{0.0, 0.05, 0.10, 0.15, 0.20};
            std::vector<double> attack_eps{0.0, 0.05, 0.10, 0.15, 0.20};
            std::vector<std::uint64_t> seeds;
            int iters = 100;
        };
        const auto m = as_usage([&] {
            reject_unknown(j, {"train_epsilons", "attack_epsilons", "seeds", "attack_iters", "config"});
            M m;
            m.base = base_from(j);
            if (j.contains("train_epsilons")) m.train_eps = j.at("train_epsilons").get<std::vector<double>>();
            if (j.contains("attack_epsilons")) m.attack_eps = j.at("attack_epsilons").get<std::vector<double>>();
            m.seeds = seeds_of(j);
            if (j.contains("attack_iters")) m.iters = j.at("attack_iters").get<int>();
            return m;
        });
        write_json_file(dir / "config.json", {{"command", "sweep"},
                                              {"kind", a.kind},
                                              {"train_epsilons", m.train_eps},
                                              {"attack_epsilons", m.attack_eps},
                                              {"seeds", m.seeds},
                                              {"attack_iters", m.iters},
                                              {"config", train::resolved_config_json(m.base)},
                                              {"threads", threads}});
        const auto g = load_dataset(m.base.dataset);
        const auto grid = eval::misclassification_grid(g, m.train_eps, m.attack_eps, m.base, m.seeds, m.iters, threads);
        auto os = open_out(dir / "misclass.csv");
        eval::write_grid_csv(os, grid);
        eval::EvalReport rep;
        rep.misclass_grid = grid.percent;
        rep.misclass_grid.push_back(grid.column_average);
        rep.metadata = read_json_file(dir / "config.json");
        write_json_file(dir / "report.json", eval::to_json(rep));
        out << "misclassification grid -> " << (dir / "misclass.csv").string() << "\n";
        return kExitOk;
    }
    if (a.kind == "alpha" || a.kind == "beta") {
        struct H {
            RunConfig base;
            std::vector<double> values;
            std::vector<std::uint64_t> seeds;
            eval::EvalAttack atk;
            double other = 0.05;
        };
        const auto h = as_usage([&] {
            reject_unknown(j, {"values", "seeds", "attack", "epsilon", "attack_iters", "other", "config"});
            H h;
            h.base = base_from(j);
            if (!j.contains("values")) throw std::invalid_argument("grid: 'values' is required");
            h.values = j.at("values").get<std::vector<double>>();
            h.seeds = seeds_of(j);
            const auto kind = eval::attack_kind_from_string(j.value("attack", std::string("ce-pgd")));
            h.atk = eval::eval_attack_from(h.base, kind, j.value("epsilon", h.base.epsilon), j.value("attack_iters", 100));
            h.other = j.value("other", 0.05);
            return h;
        });
        write_json_file(dir / "config.json", {{"command", "sweep"},
                                              {"kind", a.kind},
                                              {"values", h.values},
                                              {"seeds", h.seeds},
                                              {"attack", eval::to_string(h.atk.kind)},
                                              {"epsilon", h.atk.epsilon},
                                              {"attack_iters", h.atk.iterations},
                                              {"other", h.other},
                                              {"config", train::resolved_config_json(h.base)},
                                              {"threads", threads}});
        const auto g = load_dataset(h.base.dataset);
        const auto param = a.kind == "alpha" ? eval::SweepParam::Alpha : eval::SweepParam::Beta;
        const auto rows = eval::hyperparam_sweep(g, param, h.values, h.base, h.atk, h.seeds, h.other, threads);
        auto os = open_out(dir / (a.kind + ".csv"));
        eval::write_hyper_csv(os, rows);
        out << "rows=" << rows.size() << " -> " << (dir / (a.kind + ".csv")).string() << "\n";
        return kExitOk;
    }
    throw UsageError("--kind must be robustness, misclass, alpha or beta");
}

struct AblateArgs {
    std::string out;
    std::vector<std::string> methods{"hcref", "hc1", "hc2", "cons_h", "cons_d", "hc_uncon", "gcn"};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::optional<int> series_iters;
    std::optional<double> series_epsilon;
    int threads = 0;
};

int cmd_ablate(const ConfigFlags& flags, const AblateArgs& a, std::ostream& out) {
    // ablation defaults: CE attacks at 20% with both smoothness weights 0.05
    RunConfig base;
    base.epsilon = 0.2;
    base.series_epsilon = 0.2;
    base.alpha = 0.05;
    base.beta = 0.05;
    RunConfig cfg = flags.resolve(base);
    if (a.series_iters) cfg.series_attack_iters = *a.series_iters;
    if (a.series_epsilon) cfg.series_epsilon = *a.series_epsilon;
    cfg.record_series = true;
    as_usage([&] {
        cfg.validate();
        return 0;
    });
    std::vector<train::Method> methods;
    for (const auto& m : a.methods) methods.push_back(as_usage([&] { return train::method_from_string(m); }));
    const int threads = threads_from(a.threads);
    write_json_file(sidecar(a.out), {{"command", "ablate"},
                                     {"methods", a.methods},
                                     {"seeds", a.seeds},
                                     {"config", train::resolved_config_json(cfg)},
                                     {"threads", threads}});
    const auto g = load_dataset(cfg.dataset);
    const auto series = eval::ablation_series(g, methods, cfg, a.seeds, threads);
    auto os = open_out(a.out);
    eval::write_series_csv(os, series);
    auto ts = open_out(a.out + ".tail.csv");
    ts << "method,seed,tail_mean\n";
    for (const auto& s : series) {
        ts << train::to_string(s.method) << ',' << s.seed << ',' << sig6(s.tail_mean) << '\n';
        out << train::to_string(s.method) << " seed=" << s.seed << " tail_mean=" << sig6(s.tail_mean) << "\n";
    }
    return kExitOk;
}

struct GradCheckArgs {
    int graphs = 50;
    std::uint64_t seed = 0;
    bool verbose = false;
};

int cmd_grad_check(const GradCheckArgs& a, std::ostream& out) {
    gradcheck::SuiteOptions o;
    o.graphs = a.graphs;
    o.seed = a.seed;
    const auto results = gradcheck::run_suite(o);
    std::size_t failed = 0;
    for (const auto& r : results) {
        if (!r.report.pass) ++failed;
        if (a.verbose || !r.report.pass)
            out << (r.report.pass ? "PASS " : "FAIL ") << r.name << " " << r.report.summary() << "\n";
    }
    out << "grad-check: " << (results.size() - failed) << "/" << results.size() << " checks passed\n";
    return failed == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Graph topology attacks and hierarchical robust training for GCNs", "hcref"};
    app.require_subcommand(1);

    PrepareArgs prep;
    auto* c_prep = app.add_subcommand("prepare-data", "convert raw .content/.cites files to the canonical layout");
    c_prep->add_option("--raw", prep.raw, "directory with <name>.content and <name>.cites")
        ->required()
        ->check(CLI::ExistingDirectory);
    c_prep->add_option("--out", prep.out, "output dataset directory")->required();
    c_prep->add_option("--name", prep.name, "dataset name");
    c_prep->add_option("--train-per-class", prep.train_per_class, "training nodes per class");
    c_prep->add_option("--train-size", prep.train_size, "training split size (overrides --train-per-class)");
    c_prep->add_option("--val-size", prep.val_size, "validation split size");
    c_prep->add_flag("--drop-dangling", prep.drop_dangling, "skip citations to unknown papers instead of failing");

    ConfigFlags train_flags;
    std::string train_out;
    auto* c_train = app.add_subcommand("train", "train a model and write a run directory");
    train_flags.attach(c_train);
    c_train->add_option("--out", train_out, "run directory")->required();

    AttackArgs atk;
    auto* c_attack = app.add_subcommand("attack", "attack a trained model and write flips.tsv");
    c_attack->add_option("--run", atk.run, "run directory")->required()->check(CLI::ExistingDirectory);
    c_attack->add_option("--method", atk.method, "ce-pgd|cw-pgd|random|dice");
    c_attack->add_option("--epsilon", atk.epsilon, "perturbation rate");
    c_attack->add_option("--iters", atk.iters, "PGD iterations");
    c_attack->add_option("--victims", atk.victims, "train|test-with-true-labels|all-with-pseudo-labels");
    c_attack->add_option("--seed", atk.seed, "attack seed (defaults to the run seed)");
    c_attack->add_option("--data", atk.data, "dataset directory override");
    c_attack->add_option("--out", atk.out, "flips file")->required();

    EvaluateArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "accuracy and attack success rate of a trained model");
    c_eval->add_option("--run", ev.run, "run directory")->required()->check(CLI::ExistingDirectory);
    c_eval->add_option("--flips", ev.flips, "flips file to evaluate")->check(CLI::ExistingFile);
    c_eval->add_option("--attack", ev.attacks, "attacks to run (ce-pgd, cw-pgd, random, dice)");
    c_eval->add_option("--epsilon", ev.epsilons, "perturbation rates for --attack");
    c_eval->add_option("--iters", ev.iters, "PGD iterations");
    c_eval->add_option("--victims", ev.victims, "train|test-with-true-labels|all-with-pseudo-labels");
    c_eval->add_option("--data", ev.data, "dataset directory override");
    c_eval->add_option("--out", ev.out, "report file")->required();

    SweepArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "robustness table, misclassification grid or alpha/beta sweep");
    c_sweep->add_option("--grid", sw.grid, "grid description (JSON)")->required()->check(CLI::ExistingFile);
    c_sweep->add_option("--kind", sw.kind, "robustness|misclass|alpha|beta");
    c_sweep->add_option("--data", sw.data, "dataset directory override");
    c_sweep->add_option("--threads", sw.threads, "worker count (default: HCREF_THREADS or 1)");
    c_sweep->add_option("--out", sw.out, "output directory")->required();

    ConfigFlags abl_flags;
    AblateArgs abl;
    auto* c_abl = app.add_subcommand("ablate", "per-epoch accuracy under attack for each variant");
    abl_flags.attach(c_abl);
    c_abl->add_option("--methods", abl.methods, "variants to run");
    c_abl->add_option("--seeds", abl.seeds, "seeds");
    c_abl->add_option("--series-iters", abl.series_iters, "attack iterations for each series point");
    c_abl->add_option("--series-epsilon", abl.series_epsilon, "perturbation rate for each series point");
    c_abl->add_option("--threads", abl.threads, "worker count (default: HCREF_THREADS or 1)");
    c_abl->add_option("--out", abl.out, "series CSV")->required();

    GradCheckArgs gc;
    auto* c_gc = app.add_subcommand("grad-check", "finite-difference check of all gradients");
    c_gc->add_option("--graphs", gc.graphs, "number of random graphs");
    c_gc->add_option("--seed", gc.seed, "fixture seed");
    c_gc->add_flag("--verbose", gc.verbose, "print every check");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        emit_error(err, "usage", e.what());
        return kExitUsage;
    }

    try {
        if (c_prep->parsed()) return cmd_prepare(prep, out);
        if (c_train->parsed()) return cmd_train(train_flags, train_out, out);
        if (c_attack->parsed()) return cmd_attack(atk, out);
        if (c_eval->parsed()) return cmd_evaluate(ev, out);
        if (c_sweep->parsed()) return cmd_sweep(sw, out);
        if (c_abl->parsed()) return cmd_ablate(abl_flags, abl, out);
        if (c_gc->parsed()) return cmd_grad_check(gc, out);
    } catch (const UsageError& e) {
        emit_error(err, "usage", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        emit_error(err, "runtime", e.what());
        return kExitRuntime;
    }
    emit_error(err, "usage", "no subcommand");
    return kExitUsage;
}

}  // namespace hcref::cli
