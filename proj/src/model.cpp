#include "hcref/model.hpp"

#include "hcref/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hcref::model {

using json = nlohmann::json;

namespace {

Tensor glorot(Rng& rng, std::int64_t fan_in, std::int64_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = (2.0 * rng.uniform() - 1.0) * limit;
    return w;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index k = 0; k < a.size(); ++k)
        if (std::memcmp(&a.data()[k], &b.data()[k], sizeof(double)) != 0) return false;
    return true;
}

json matrix_json(const Tensor& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

Tensor matrix_from_json(const json& j, std::int64_t rows, std::int64_t cols, const char* what) {
    if (!j.is_array() || static_cast<std::int64_t>(j.size()) != rows)
        throw std::invalid_argument(std::string("params: '") + what + "' must have " + std::to_string(rows) + " rows");
    Tensor m(rows, cols);
    for (std::int64_t i = 0; i < rows; ++i) {
        const json& r = j[i];
        if (!r.is_array() || static_cast<std::int64_t>(r.size()) != cols)
            throw std::invalid_argument(std::string("params: row ") + std::to_string(i) + " of '" + what + "' must have " +
                                        std::to_string(cols) + " entries");
        for (std::int64_t c = 0; c < cols; ++c) m(i, c) = r[c].get<double>();
    }
    return m;
}

Tensor one_hot(std::span<const int> labels, const NodeSet& nodes, std::int64_t C, double value = 1.0) {
    Tensor oh = Tensor::Zero(static_cast<Eigen::Index>(nodes.size()), C);
    for (std::size_t r = 0; r < nodes.size(); ++r) {
        const int y = labels[nodes[r]];
        if (y < 0 || y >= C) throw std::invalid_argument("label " + std::to_string(y) + " outside [0," + std::to_string(C) + ")");
        oh(static_cast<Eigen::Index>(r), y) = value;
    }
    return oh;
}

grad::IndexList as_index_list(const NodeSet& nodes) { return grad::IndexList(nodes.begin(), nodes.end()); }

}  // namespace

ModelParams init_params(std::uint64_t seed, std::int64_t d, std::int64_t h, std::int64_t C) {
    if (d <= 0 || h <= 0 || C <= 0) throw std::invalid_argument("init_params: dimensions must be positive");
    Rng rng(seed, "init");
    ModelParams p;
    p.seed = seed;
    p.W1 = glorot(rng, d, h);
    p.W2 = glorot(rng, h, h);
    p.w = glorot(rng, h, C);
    p.b = Tensor::Zero(1, C);
    return p;
}

bool encoder_equal(const ModelParams& a, const ModelParams& b) { return bit_equal(a.W1, b.W1) && bit_equal(a.W2, b.W2); }
bool head_equal(const ModelParams& a, const ModelParams& b) { return bit_equal(a.w, b.w) && bit_equal(a.b, b.b); }

json to_json(const ModelParams& p) {
    return json{{"d", p.d()},
                {"h", p.h()},
                {"C", p.C()},
                {"seed", p.seed},
                {"freeze_encoder", p.freeze_encoder},
                {"freeze_head", p.freeze_head},
                {"W1", matrix_json(p.W1)},
                {"W2", matrix_json(p.W2)},
                {"w", matrix_json(p.w)},
                {"b", matrix_json(p.b)}};
}

ModelParams params_from_json(const json& j) {
    ModelParams p;
    const auto d = j.at("d").get<std::int64_t>();
    const auto h = j.at("h").get<std::int64_t>();
    const auto C = j.at("C").get<std::int64_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.freeze_encoder = j.at("freeze_encoder").get<bool>();
    p.freeze_head = j.at("freeze_head").get<bool>();
    p.W1 = matrix_from_json(j.at("W1"), d, h, "W1");
    p.W2 = matrix_from_json(j.at("W2"), h, h, "W2");
    p.w = matrix_from_json(j.at("w"), h, C, "w");
    p.b = matrix_from_json(j.at("b"), 1, C, "b");
    return p;
}

void save_params(const ModelParams& p, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << to_json(p).dump() << "\n";
}

ModelParams load_params(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("missing file " + file.string());
    return params_from_json(json::parse(is));
}

// ---------------------------------------------------------------------------

ParamNodes declare_params(Tape& tape, std::int64_t d, std::int64_t h, std::int64_t C) {
    return {tape.input(kW1, d, h), tape.input(kW2, h, h), tape.input(kHeadW, h, C), tape.input(kHeadB, 1, C)};
}

ParamNodes constant_params(Tape& tape, const ModelParams& p) {
    return {tape.constant(p.W1), tape.constant(p.W2), tape.constant(p.w), tape.constant(p.b)};
}

grad::NamedTensors param_inputs(const ModelParams& p) {
    return {{kW1, p.W1}, {kW2, p.W2}, {kHeadW, p.w}, {kHeadB, p.b}};
}

namespace {
NodeId propagate(Tape& tape, const AdjOperand& adj, NodeId x) {
    if (adj.dense) return tape.matmul(*adj.dense, x);
    if (!adj.sparse) throw std::invalid_argument("adjacency operand is empty");
    return tape.sparse_matmul(adj.sparse, x);
}
}  // namespace

NodeId build_head(Tape& tape, NodeId h, const ParamNodes& p, HeadActivation head) {
    const NodeId lin = tape.add_row_vector(tape.matmul(h, p.w), p.b);
    return head == HeadActivation::Relu ? tape.relu(lin) : lin;
}

ForwardNodes build_forward(Tape& tape, const AdjOperand& adj, NodeId x, const ParamNodes& p, HeadActivation head,
                           std::optional<NodeId> xw1) {
    const NodeId xw = xw1 ? *xw1 : tape.matmul(x, p.W1);
    const NodeId h1 = tape.relu(propagate(tape, adj, xw));
    const NodeId h2 = tape.relu(propagate(tape, adj, tape.matmul(h1, p.W2)));
    return {h2, build_head(tape, h2, p, head)};
}

NodeId build_ce_loss(Tape& tape, NodeId z, std::span<const int> labels, const NodeSet& nodes, bool mean_reduce) {
    if (nodes.empty()) throw std::invalid_argument("ce_loss: empty node set");
    const auto C = tape.node(z).cols;
    const NodeId logp = tape.row_log_softmax(tape.gather_rows(z, as_index_list(nodes)));
    const double scale = mean_reduce ? -1.0 / static_cast<double>(nodes.size()) : -1.0;
    const NodeId picked = tape.hadamard(logp, tape.constant(one_hot(labels, nodes, C)));
    return tape.scale(tape.sum(picked), scale);
}

NodeId build_cw_margin(Tape& tape, NodeId z, std::span<const int> labels, const NodeSet& nodes, double kappa) {
    const auto C = tape.node(z).cols;
    if (C < 2) throw std::invalid_argument("cw_margin: needs at least two classes");
    if (nodes.empty()) throw std::invalid_argument("cw_margin: empty node set");
    // true-class entries are pushed far below every logit so row_max picks the
    // best other class
    constexpr double kMaskOffset = -1e6;
    const NodeId zs = tape.gather_rows(z, as_index_list(nodes));
    const NodeId true_logit = tape.row_sum(tape.hadamard(zs, tape.constant(one_hot(labels, nodes, C))));
    const NodeId best_other = tape.row_max(tape.add(zs, tape.constant(one_hot(labels, nodes, C, kMaskOffset))));
    const NodeId margin = tape.sub(true_logit, best_other);
    const NodeId clamped = tape.add_scalar(tape.relu(tape.add_scalar(margin, kappa)), -kappa);
    return tape.sum(clamped);
}

NodeId build_kl_smooth(Tape& tape, NodeId adv, NodeId nat, const NodeSet& nodes, bool mean_reduce) {
    if (nodes.empty()) throw std::invalid_argument("kl_smooth: empty node set");
    const auto idx = as_index_list(nodes);
    const NodeId za = tape.gather_rows(adv, idx);
    const NodeId zn = tape.gather_rows(nat, idx);
    const NodeId log_pa = tape.row_log_softmax(za);
    const NodeId log_pn = tape.row_log_softmax(zn);
    const NodeId pa = tape.row_softmax(za);
    const NodeId kl = tape.sum(tape.hadamard(pa, tape.sub(log_pa, log_pn)));
    return mean_reduce ? tape.scale(kl, 1.0 / static_cast<double>(nodes.size())) : kl;
}

// ---------------------------------------------------------------------------

namespace {
ForwardOutputs run_forward(const ModelParams& p, const AdjOperand& adj, const Tensor* dense_adj, const Tensor& x,
                           HeadActivation head) {
    Tape tape;
    const NodeId xn = tape.input("X", x.rows(), x.cols());
    AdjOperand op = adj;
    if (dense_adj) op = AdjOperand::of(tape.input("A_hat", dense_adj->rows(), dense_adj->cols()));
    const auto out = build_forward(tape, op, xn, declare_params(tape, p.d(), p.h(), p.C()), head);
    auto inputs = param_inputs(p);
    inputs["X"] = x;
    if (dense_adj) inputs["A_hat"] = *dense_adj;
    const auto ev = grad::forward(tape, inputs);
    return {ev.value(out.H), ev.value(out.Z)};
}
}  // namespace

ForwardOutputs forward(const ModelParams& p, const SparseMatrix& adj_hat, const Tensor& x, HeadActivation head) {
    return run_forward(p, AdjOperand::of(std::make_shared<const SparseMatrix>(adj_hat)), nullptr, x, head);
}

ForwardOutputs forward(const ModelParams& p, const Tensor& adj_hat, const Tensor& x, HeadActivation head) {
    return run_forward(p, {}, &adj_hat, x, head);
}

double ce_loss(const Tensor& z, std::span<const int> labels, const NodeSet& nodes, bool mean_reduce) {
    Tape tape;
    const NodeId zn = tape.input("Z", z.rows(), z.cols());
    const NodeId loss = build_ce_loss(tape, zn, labels, nodes, mean_reduce);
    return grad::forward(tape, {{"Z", z}}).scalar(loss);
}

double cw_margin(const Tensor& z, std::span<const int> labels, const NodeSet& nodes, double kappa) {
    Tape tape;
    const NodeId zn = tape.input("Z", z.rows(), z.cols());
    const NodeId loss = build_cw_margin(tape, zn, labels, nodes, kappa);
    return grad::forward(tape, {{"Z", z}}).scalar(loss);
}

double kl_smooth(const Tensor& z_adv, const Tensor& z_nat, const NodeSet& nodes) {
    Tape tape;
    const NodeId a = tape.input("adv", z_adv.rows(), z_adv.cols());
    const NodeId b = tape.input("nat", z_nat.rows(), z_nat.cols());
    const NodeId loss = build_kl_smooth(tape, a, b, nodes);
    return grad::forward(tape, {{"adv", z_adv}, {"nat", z_nat}}).scalar(loss);
}

std::vector<int> predict(const Tensor& z) {
    std::vector<int> pred(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c)
            if (z(i, c) > z(i, best)) best = c;
        pred[i] = static_cast<int>(best);
    }
    return pred;
}

double accuracy(std::span<const int> pred, std::span<const int> labels, const NodeSet& nodes) {
    if (nodes.empty()) throw std::invalid_argument("accuracy: empty node set");
    std::size_t correct = 0;
    for (auto i : nodes) correct += pred[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

}  // namespace hcref::model
