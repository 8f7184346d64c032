#include "hcref/graphio.hpp"

#include "hcref/format.hpp"
#include "hcref/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace hcref::graphio {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Validation

void validate(const Graph& g) {
    const NodeIndex n = g.num_nodes;
    if (g.features.rows() != n || g.features.cols() != g.num_features)
        throw GraphLoadError("feature matrix is " + std::to_string(g.features.rows()) + "x" +
                             std::to_string(g.features.cols()) + ", expected " + std::to_string(n) + "x" +
                             std::to_string(g.num_features));
    if (static_cast<NodeIndex>(g.labels.size()) != n)
        throw GraphLoadError("label count " + std::to_string(g.labels.size()) + " != num_nodes " + std::to_string(n));
    for (NodeIndex i = 0; i < n; ++i)
        if (g.labels[i] < 0 || g.labels[i] >= g.num_classes)
            throw GraphLoadError("label " + std::to_string(g.labels[i]) + " of node " + std::to_string(i) +
                                 " outside [0," + std::to_string(g.num_classes) + ")");
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto [u, v] = g.edges[k];
        const std::string rec = "edge (" + std::to_string(u) + "," + std::to_string(v) + ")";
        if (u == v) throw GraphLoadError("self-loop in edges.tsv: " + rec);
        if (u < 0 || v < 0 || u >= n || v >= n) throw GraphLoadError(rec + " references a node outside [0," + std::to_string(n) + ")");
        if (u > v) throw GraphLoadError(rec + " is not in u<v form");
        if (k > 0 && !(g.edges[k - 1] < g.edges[k]))
            throw GraphLoadError(rec + (g.edges[k - 1] == g.edges[k] ? " is duplicated" : " is out of order"));
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    auto check_split = [&](const std::vector<NodeIndex>& ids, const char* split) {
        for (NodeIndex i : ids) {
            if (i < 0 || i >= n)
                throw GraphLoadError(std::string("split '") + split + "' has node " + std::to_string(i) + " outside [0," +
                                     std::to_string(n) + ")");
            if (seen[i]) throw GraphLoadError(std::string("node ") + std::to_string(i) + " of split '" + split + "' appears in more than one split");
            seen[i] = 1;
        }
    };
    check_split(g.splits.train, "train");
    check_split(g.splits.val, "val");
    check_split(g.splits.test, "test");
}

// ---------------------------------------------------------------------------
// Adjacency

SparseMatrix adjacency_from_edges(NodeIndex n, const std::vector<Edge>& edges) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(edges.size() * 2);
    for (const auto& [u, v] : edges) {
        trip.emplace_back(u, v, 1.0);
        trip.emplace_back(v, u, 1.0);
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

SparseMatrix adjacency(const Graph& g) { return adjacency_from_edges(g.num_nodes, g.edges); }

Tensor dense_adjacency(NodeIndex n, const std::vector<Edge>& edges) {
    Tensor a = Tensor::Zero(n, n);
    for (const auto& [u, v] : edges) {
        a(u, v) = 1.0;
        a(v, u) = 1.0;
    }
    return a;
}

Tensor dense_adjacency(const Graph& g) { return dense_adjacency(g.num_nodes, g.edges); }

namespace {
[[noreturn]] void bad_degree(Eigen::Index i, double d) {
    throw std::domain_error("normalize_adjacency: non-positive degree " + std::to_string(d) + " at node " + std::to_string(i));
}
}  // namespace

Tensor normalize_adjacency(const Tensor& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("normalize_adjacency: matrix is not square");
    Tensor t = a;
    t.diagonal().array() += 1.0;
    Eigen::VectorXd dinv = t.rowwise().sum();
    for (Eigen::Index i = 0; i < dinv.size(); ++i) {
        if (!(dinv[i] > 0.0)) bad_degree(i, dinv[i]);
        dinv[i] = 1.0 / std::sqrt(dinv[i]);
    }
    return dinv.asDiagonal() * t * dinv.asDiagonal();
}

SparseMatrix normalize_adjacency(const SparseMatrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("normalize_adjacency: matrix is not square");
    SparseMatrix id(a.rows(), a.cols());
    id.setIdentity();
    SparseMatrix t = a + id;
    Eigen::VectorXd dinv = Eigen::VectorXd::Zero(t.rows());
    for (Eigen::Index i = 0; i < t.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(t, i); it; ++it) dinv[i] += it.value();
    for (Eigen::Index i = 0; i < dinv.size(); ++i) {
        if (!(dinv[i] > 0.0)) bad_degree(i, dinv[i]);
        dinv[i] = 1.0 / std::sqrt(dinv[i]);
    }
    for (Eigen::Index i = 0; i < t.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(t, i); it; ++it) it.valueRef() *= dinv[i] * dinv[it.col()];
    return t;
}

Tensor complement_mask(const Tensor& a) {
    Tensor c = Tensor::Ones(a.rows(), a.cols()) - a;
    c.diagonal().setZero();
    return c;
}

Tensor row_normalize(const Tensor& x) {
    Tensor out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = out.row(i).cwiseAbs().sum();
        if (s > 0.0) out.row(i) /= s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw citation data

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> tok;
    std::istringstream is(line);
    std::string t;
    while (is >> t) tok.push_back(t);
    return tok;
}

fs::path find_with_ext(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw GraphLoadError("raw directory not found: " + dir.string());
    std::vector<fs::path> hits;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) hits.push_back(e.path());
    if (hits.empty()) throw GraphLoadError("no *" + ext + " file in " + dir.string());
    if (hits.size() > 1) throw GraphLoadError("more than one *" + ext + " file in " + dir.string());
    return hits.front();
}

double parse_double(const std::string& s, const std::string& where) {
    double x = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw GraphLoadError("malformed number '" + s + "' in " + where);
    return x;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
    std::int64_t x = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw GraphLoadError("malformed integer '" + s + "' in " + where);
    return x;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw GraphLoadError("missing file " + p.string());
    return is;
}

}  // namespace

PrepareReport prepare_dataset(const fs::path& raw_dir, const fs::path& out_dir, const PrepareOptions& opts) {
    const fs::path content_path = find_with_ext(raw_dir, ".content");
    const fs::path cites_path = find_with_ext(raw_dir, ".cites");

    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> class_names;
    std::unordered_map<std::string, NodeIndex> index_of;
    {
        auto is = open_in(content_path);
        std::string line;
        std::size_t lineno = 0;
        std::size_t width = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto tok = split_ws(line);
            if (tok.empty()) continue;
            const std::string where = content_path.filename().string() + ":" + std::to_string(lineno);
            if (tok.size() < 2) throw GraphLoadError("too few fields at " + where);
            const std::size_t w = tok.size() - 2;
            if (ids.empty())
                width = w;
            else if (w != width)
                throw GraphLoadError("inconsistent feature width " + std::to_string(w) + " (expected " +
                                     std::to_string(width) + ") at " + where);
            if (index_of.count(tok[0])) throw GraphLoadError("duplicate node id '" + tok[0] + "' at " + where);
            index_of[tok[0]] = static_cast<NodeIndex>(ids.size());
            ids.push_back(tok[0]);
            std::vector<double> r(w);
            for (std::size_t k = 0; k < w; ++k) r[k] = parse_double(tok[k + 1], where);
            rows.push_back(std::move(r));
            class_names.push_back(tok.back());
        }
        if (ids.empty()) throw GraphLoadError("empty content file " + content_path.string());
    }

    std::set<std::string> class_set(class_names.begin(), class_names.end());
    std::map<std::string, int> class_id;
    for (const auto& c : class_set) class_id.emplace(c, static_cast<int>(class_id.size()));

    Graph g;
    g.name = opts.name.empty() ? content_path.stem().string() : opts.name;
    g.num_nodes = static_cast<NodeIndex>(ids.size());
    g.num_features = static_cast<NodeIndex>(rows.front().size());
    g.num_classes = static_cast<int>(class_id.size());
    g.features.resize(g.num_nodes, g.num_features);
    for (NodeIndex i = 0; i < g.num_nodes; ++i)
        for (NodeIndex f = 0; f < g.num_features; ++f) g.features(i, f) = rows[i][f];
    g.labels.resize(g.num_nodes);
    for (NodeIndex i = 0; i < g.num_nodes; ++i) g.labels[i] = class_id.at(class_names[i]);

    PrepareReport rep;
    {
        auto is = open_in(cites_path);
        std::string line;
        std::size_t lineno = 0;
        std::set<Edge> edge_set;
        while (std::getline(is, line)) {
            ++lineno;
            auto tok = split_ws(line);
            if (tok.empty()) continue;
            const std::string where = cites_path.filename().string() + ":" + std::to_string(lineno);
            if (tok.size() != 2) throw GraphLoadError("expected 'cited citing' at " + where);
            ++rep.num_citation_lines;
            auto a = index_of.find(tok[0]);
            auto b = index_of.find(tok[1]);
            if (a == index_of.end() || b == index_of.end()) {
                const std::string& missing = a == index_of.end() ? tok[0] : tok[1];
                if (!opts.drop_dangling_citations)
                    throw GraphLoadError("node id '" + missing + "' referenced at " + where + " is absent from " +
                                         content_path.filename().string());
                ++rep.dropped_dangling;
                continue;
            }
            NodeIndex u = a->second;
            NodeIndex v = b->second;
            if (u == v) {
                ++rep.dropped_self_loops;
                continue;
            }
            if (u > v) std::swap(u, v);
            if (!edge_set.insert({u, v}).second) ++rep.dropped_duplicates;
        }
        g.edges.assign(edge_set.begin(), edge_set.end());
    }

    const NodeIndex m = opts.train_size >= 0 ? opts.train_size : NodeIndex(opts.train_per_class) * g.num_classes;
    const NodeIndex n_train = std::min(m, g.num_nodes);
    const NodeIndex n_val = std::min<NodeIndex>(opts.val_size, g.num_nodes - n_train);
    for (NodeIndex i = 0; i < g.num_nodes; ++i) {
        if (i < n_train)
            g.splits.train.push_back(i);
        else if (i < n_train + n_val)
            g.splits.val.push_back(i);
        else
            g.splits.test.push_back(i);
    }

    validate(g);
    write_graph(g, out_dir);
    rep.num_nodes = g.num_nodes;
    rep.num_edges = g.edges.size();
    return rep;
}

// ---------------------------------------------------------------------------
// Canonical directory

void write_graph(const Graph& g, const fs::path& out_dir) {
    validate(g);
    fs::create_directories(out_dir);
    {
        json meta = {{"name", g.name},
                     {"num_nodes", g.num_nodes},
                     {"num_features", g.num_features},
                     {"num_classes", g.num_classes},
                     {"num_edges", g.edges.size()}};
        auto os = open_out(out_dir / "meta.json");
        os << meta.dump(2) << "\n";
    }
    {
        auto os = open_out(out_dir / "features.tsv");
        for (NodeIndex i = 0; i < g.num_nodes; ++i)
            for (NodeIndex f = 0; f < g.num_features; ++f) {
                const double x = g.features(i, f);
                if (x != 0.0) os << i << '\t' << f << '\t' << shortest_repr(x) << '\n';
            }
    }
    {
        auto os = open_out(out_dir / "edges.tsv");
        for (const auto& [u, v] : g.edges) os << u << '\t' << v << '\n';
    }
    {
        auto os = open_out(out_dir / "labels.tsv");
        for (NodeIndex i = 0; i < g.num_nodes; ++i) os << i << '\t' << g.labels[i] << '\n';
    }
    {
        json s = {{"train", g.splits.train}, {"val", g.splits.val}, {"test", g.splits.test}};
        auto os = open_out(out_dir / "splits.json");
        os << s.dump() << "\n";
    }
}

namespace {

json read_json(const fs::path& p) {
    auto is = open_in(p);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw GraphLoadError("malformed JSON in " + p.string() + ": " + e.what());
    }
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& p, std::size_t fields) {
    auto is = open_in(p);
    std::vector<std::vector<std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            tok.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (tok.size() != fields)
            throw GraphLoadError(p.filename().string() + ":" + std::to_string(lineno) + " has " + std::to_string(tok.size()) +
                                 " fields, expected " + std::to_string(fields));
        out.push_back(std::move(tok));
    }
    return out;
}

}  // namespace

Graph load_graph(const fs::path& dir, const LoadOptions& opts) {
    if (!fs::is_directory(dir)) throw GraphLoadError("dataset directory not found: " + dir.string());
    Graph g;
    const json meta = read_json(dir / "meta.json");
    try {
        g.name = meta.at("name").get<std::string>();
        g.num_nodes = meta.at("num_nodes").get<NodeIndex>();
        g.num_features = meta.at("num_features").get<NodeIndex>();
        g.num_classes = meta.at("num_classes").get<int>();
    } catch (const json::exception& e) {
        throw GraphLoadError("meta.json: " + std::string(e.what()));
    }
    if (g.num_nodes <= 0 || g.num_features <= 0 || g.num_classes <= 0)
        throw GraphLoadError("meta.json: dimensions must be positive");

    g.features = Tensor::Zero(g.num_nodes, g.num_features);
    for (const auto& t : read_tsv(dir / "features.tsv", 3)) {
        const auto i = parse_int(t[0], "features.tsv");
        const auto f = parse_int(t[1], "features.tsv");
        if (i < 0 || i >= g.num_nodes || f < 0 || f >= g.num_features)
            throw GraphLoadError("features.tsv entry (" + t[0] + "," + t[1] + ") outside the declared shape");
        g.features(i, f) = parse_double(t[2], "features.tsv");
    }

    for (const auto& t : read_tsv(dir / "edges.tsv", 2))
        g.edges.emplace_back(parse_int(t[0], "edges.tsv"), parse_int(t[1], "edges.tsv"));

    g.labels.assign(static_cast<std::size_t>(g.num_nodes), -1);
    std::vector<char> labeled(static_cast<std::size_t>(g.num_nodes), 0);
    for (const auto& t : read_tsv(dir / "labels.tsv", 2)) {
        const auto i = parse_int(t[0], "labels.tsv");
        if (i < 0 || i >= g.num_nodes) throw GraphLoadError("labels.tsv: node " + t[0] + " outside [0," + std::to_string(g.num_nodes) + ")");
        if (labeled[i]) throw GraphLoadError("labels.tsv: node " + t[0] + " labeled twice");
        labeled[i] = 1;
        g.labels[i] = static_cast<int>(parse_int(t[1], "labels.tsv"));
    }
    for (NodeIndex i = 0; i < g.num_nodes; ++i)
        if (!labeled[i]) throw GraphLoadError("labels.tsv: node " + std::to_string(i) + " has no label");

    const json splits = read_json(dir / "splits.json");
    try {
        g.splits.train = splits.at("train").get<std::vector<NodeIndex>>();
        g.splits.val = splits.at("val").get<std::vector<NodeIndex>>();
        g.splits.test = splits.at("test").get<std::vector<NodeIndex>>();
    } catch (const json::exception& e) {
        throw GraphLoadError("splits.json: " + std::string(e.what()));
    }

    validate(g);
    if (opts.row_normalize_features) g.features = row_normalize(g.features);
    return g;
}

// ---------------------------------------------------------------------------
// Synthetic

Graph make_synthetic(const SyntheticOptions& o) {
    Rng rng(o.seed, "synthetic-graph");
    Graph g;
    g.name = "synthetic";
    g.num_nodes = o.num_nodes;
    g.num_features = o.num_features;
    g.num_classes = o.num_classes;
    g.labels.resize(o.num_nodes);
    for (NodeIndex i = 0; i < o.num_nodes; ++i)
        g.labels[i] = i < o.train_size ? static_cast<int>(i % o.num_classes) : static_cast<int>(rng.below(o.num_classes));

    for (NodeIndex u = 0; u < o.num_nodes; ++u)
        for (NodeIndex v = u + 1; v < o.num_nodes; ++v)
            if (rng.bernoulli(g.labels[u] == g.labels[v] ? o.p_in : o.p_out)) g.edges.emplace_back(u, v);

    g.features = Tensor::Zero(o.num_nodes, o.num_features);
    for (NodeIndex i = 0; i < o.num_nodes; ++i)
        for (NodeIndex f = 0; f < o.num_features; ++f) {
            const bool topic = (f % o.num_classes) == g.labels[i];
            if (rng.bernoulli(topic ? o.feature_on : o.feature_noise)) g.features(i, f) = 1.0;
        }

    const NodeIndex n_train = std::min(o.train_size, o.num_nodes);
    const NodeIndex n_val = std::min(o.val_size, o.num_nodes - n_train);
    for (NodeIndex i = 0; i < o.num_nodes; ++i) {
        if (i < n_train)
            g.splits.train.push_back(i);
        else if (i < n_train + n_val)
            g.splits.val.push_back(i);
        else
            g.splits.test.push_back(i);
    }
    validate(g);
    return g;
}

}  // namespace hcref::graphio
