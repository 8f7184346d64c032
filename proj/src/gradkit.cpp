#include "hcref/gradkit.hpp"

#include "hcref/pairs.hpp"
#include "hcref/rng.hpp"

#include <cmath>
#include <sstream>

namespace hcref::grad {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    throw ShapeError(std::string(op) + ": " + detail);
}

}  // namespace

NonFiniteError::NonFiniteError(NodeId node, const std::string& op)
    : std::runtime_error("non-finite value produced at node " + std::to_string(node) + " (" + op + ")"),
      node_(node) {}

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Constant: return "constant";
        case Op::MatMul: return "matmul";
        case Op::SparseMatMul: return "sparse_matmul";
        case Op::Hadamard: return "hadamard";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::AddIdentity: return "add_identity";
        case Op::AddRowVector: return "add_row_vector";
        case Op::Relu: return "relu";
        case Op::RowSoftmax: return "row_softmax";
        case Op::RowLogSoftmax: return "row_log_softmax";
        case Op::Log: return "log";
        case Op::Pow: return "pow";
        case Op::RowSum: return "row_sum";
        case Op::ColSum: return "col_sum";
        case Op::Sum: return "sum";
        case Op::RowMax: return "row_max";
        case Op::GatherRows: return "gather_rows";
        case Op::ScaleRows: return "scale_rows";
        case Op::ScaleCols: return "scale_cols";
        case Op::SymFromPairs: return "sym_from_pairs";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Tape construction

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

const Node& Tape::check(NodeId id) const {
    if (id >= nodes_.size()) throw std::out_of_range("tape node " + std::to_string(id) + " does not exist");
    return nodes_[id];
}

NodeId Tape::input(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (inputs_.count(name)) throw std::invalid_argument("duplicate tape input '" + name + "'");
    Node n;
    n.op = Op::Input;
    n.rows = rows;
    n.cols = cols;
    n.name = name;
    const NodeId id = push(std::move(n));
    inputs_[name] = id;
    return id;
}

NodeId Tape::constant(Tensor value) {
    return constant(std::make_shared<const Tensor>(std::move(value)));
}

NodeId Tape::constant(std::shared_ptr<const Tensor> value) {
    Node n;
    n.op = Op::Constant;
    n.rows = value->rows();
    n.cols = value->cols();
    n.constant = std::move(value);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Node& x = check(a);
    const Node& y = check(b);
    if (x.cols != y.rows)
        shape_fail("matmul", shape_str(x.rows, x.cols) + " * " + shape_str(y.rows, y.cols));
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.rows = x.rows;
    n.cols = y.cols;
    return push(std::move(n));
}

NodeId Tape::sparse_matmul(std::shared_ptr<const SparseMatrix> lhs, NodeId b) {
    const Node& y = check(b);
    if (lhs->cols() != y.rows)
        shape_fail("sparse_matmul", shape_str(lhs->rows(), lhs->cols()) + " * " + shape_str(y.rows, y.cols));
    Node n;
    n.op = Op::SparseMatMul;
    n.a = b;
    n.rows = lhs->rows();
    n.cols = y.cols;
    n.sparse = std::move(lhs);
    return push(std::move(n));
}

namespace {
Node binary_same_shape(Op op, const Node& x, const Node& y, NodeId a, NodeId b) {
    if (x.rows != y.rows || x.cols != y.cols)
        shape_fail(op_name(op), shape_str(x.rows, x.cols) + " vs " + shape_str(y.rows, y.cols));
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.rows = x.rows;
    n.cols = x.cols;
    return n;
}

Node unary(Op op, const Node& x, NodeId a, double scalar = 0.0) {
    Node n;
    n.op = op;
    n.a = a;
    n.rows = x.rows;
    n.cols = x.cols;
    n.scalar = scalar;
    return n;
}
}  // namespace

NodeId Tape::hadamard(NodeId a, NodeId b) { return push(binary_same_shape(Op::Hadamard, check(a), check(b), a, b)); }
NodeId Tape::add(NodeId a, NodeId b) { return push(binary_same_shape(Op::Add, check(a), check(b), a, b)); }
NodeId Tape::sub(NodeId a, NodeId b) { return push(binary_same_shape(Op::Sub, check(a), check(b), a, b)); }
NodeId Tape::scale(NodeId a, double c) { return push(unary(Op::Scale, check(a), a, c)); }
NodeId Tape::add_scalar(NodeId a, double c) { return push(unary(Op::AddScalar, check(a), a, c)); }

NodeId Tape::add_identity(NodeId a) {
    const Node& x = check(a);
    if (x.rows != x.cols) shape_fail("add_identity", "non-square " + shape_str(x.rows, x.cols));
    return push(unary(Op::AddIdentity, x, a));
}

NodeId Tape::add_row_vector(NodeId a, NodeId row) {
    const Node& x = check(a);
    const Node& r = check(row);
    if (r.rows != 1 || r.cols != x.cols)
        shape_fail("add_row_vector", shape_str(x.rows, x.cols) + " + row " + shape_str(r.rows, r.cols));
    Node n = unary(Op::AddRowVector, x, a);
    n.b = row;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) { return push(unary(Op::Relu, check(a), a)); }
NodeId Tape::row_softmax(NodeId a) { return push(unary(Op::RowSoftmax, check(a), a)); }
NodeId Tape::row_log_softmax(NodeId a) { return push(unary(Op::RowLogSoftmax, check(a), a)); }
NodeId Tape::log(NodeId a) { return push(unary(Op::Log, check(a), a)); }
NodeId Tape::pow(NodeId a, double p) { return push(unary(Op::Pow, check(a), a, p)); }

NodeId Tape::row_sum(NodeId a) {
    Node n = unary(Op::RowSum, check(a), a);
    n.cols = 1;
    return push(std::move(n));
}

NodeId Tape::col_sum(NodeId a) {
    Node n = unary(Op::ColSum, check(a), a);
    n.rows = 1;
    return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
    Node n = unary(Op::Sum, check(a), a);
    n.rows = 1;
    n.cols = 1;
    return push(std::move(n));
}

NodeId Tape::row_max(NodeId a) {
    const Node& x = check(a);
    if (x.cols == 0) shape_fail("row_max", "zero columns");
    Node n = unary(Op::RowMax, x, a);
    n.cols = 1;
    return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, IndexList rows) {
    const Node& x = check(a);
    for (auto r : rows)
        if (r < 0 || r >= x.rows)
            shape_fail("gather_rows", "row " + std::to_string(r) + " outside " + shape_str(x.rows, x.cols));
    Node n = unary(Op::GatherRows, x, a);
    n.rows = static_cast<Eigen::Index>(rows.size());
    n.indices = std::make_shared<const IndexList>(std::move(rows));
    return push(std::move(n));
}

NodeId Tape::scale_rows(NodeId d, NodeId m) {
    const Node& dv = check(d);
    const Node& x = check(m);
    if (dv.cols != 1 || dv.rows != x.rows)
        shape_fail("scale_rows", "diag " + shape_str(dv.rows, dv.cols) + " vs " + shape_str(x.rows, x.cols));
    Node n = unary(Op::ScaleRows, x, d);
    n.b = m;
    return push(std::move(n));
}

NodeId Tape::scale_cols(NodeId m, NodeId d) {
    const Node& x = check(m);
    const Node& dv = check(d);
    if (dv.cols != 1 || dv.rows != x.cols)
        shape_fail("scale_cols", shape_str(x.rows, x.cols) + " vs diag " + shape_str(dv.rows, dv.cols));
    Node n = unary(Op::ScaleCols, x, m);
    n.b = d;
    return push(std::move(n));
}

NodeId Tape::sym_from_pairs(NodeId pairs, Eigen::Index n) {
    const Node& p = check(pairs);
    if (p.cols != 1 || p.rows != pair_count(n))
        shape_fail("sym_from_pairs", "pair vector " + shape_str(p.rows, p.cols) + " for n=" + std::to_string(n));
    Node out = unary(Op::SymFromPairs, p, pairs);
    out.rows = n;
    out.cols = n;
    return push(std::move(out));
}

void Tape::mark_output(const std::string& name, NodeId id) {
    check(id);
    outputs_[name] = id;
}

// ---------------------------------------------------------------------------
// Forward

const Tensor& Evaluation::value(NodeId id) const {
    const Node& n = tape_->node(id);
    return n.op == Op::Constant ? *n.constant : values_.at(id);
}

const Tensor& Evaluation::output(const std::string& name) const {
    auto it = tape_->outputs().find(name);
    if (it == tape_->outputs().end()) throw std::out_of_range("no tape output named '" + name + "'");
    return value(it->second);
}

double Evaluation::scalar(NodeId id) const {
    const Tensor& v = value(id);
    if (v.size() != 1) throw ShapeError("node " + std::to_string(id) + " is not scalar");
    return v(0, 0);
}

NamedTensors Evaluation::outputs() const {
    NamedTensors out;
    for (const auto& [name, id] : tape_->outputs()) out[name] = value(id);
    return out;
}

namespace {

Tensor softmax_rows(const Tensor& x) {
    Tensor y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - m).exp();
        y.row(i) /= y.row(i).sum();
    }
    return y;
}

Tensor log_softmax_rows(const Tensor& x) {
    Tensor y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        const double lse = m + std::log((x.row(i).array() - m).exp().sum());
        y.row(i) = x.row(i).array() - lse;
    }
    return y;
}

Eigen::Index argmax_row(const Tensor& x, Eigen::Index i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < x.cols(); ++j)
        if (x(i, j) > x(i, best)) best = j;
    return best;
}

}  // namespace

Evaluation forward(const Tape& tape, const NamedTensors& inputs) {
    Evaluation ev;
    ev.tape_ = &tape;
    ev.values_.resize(tape.size());
    auto v = [&ev](NodeId id) -> const Tensor& { return ev.value(id); };

    for (NodeId id = 0; id < tape.size(); ++id) {
        const Node& n = tape.node(id);
        Tensor& out = ev.values_[id];
        switch (n.op) {
            case Op::Input: {
                auto it = inputs.find(n.name);
                if (it == inputs.end()) throw ShapeError("missing tape input '" + n.name + "'");
                if (it->second.rows() != n.rows || it->second.cols() != n.cols)
                    throw ShapeError("input '" + n.name + "' expected " + shape_str(n.rows, n.cols) + ", got " +
                                     shape_str(it->second.rows(), it->second.cols()));
                out = it->second;
                break;
            }
            case Op::Constant: continue;
            case Op::MatMul: out.noalias() = v(n.a) * v(n.b); break;
            case Op::SparseMatMul: out = *n.sparse * v(n.a); break;
            case Op::Hadamard: out = v(n.a).cwiseProduct(v(n.b)); break;
            case Op::Add: out = v(n.a) + v(n.b); break;
            case Op::Sub: out = v(n.a) - v(n.b); break;
            case Op::Scale: out = n.scalar * v(n.a); break;
            case Op::AddScalar: out = v(n.a).array() + n.scalar; break;
            case Op::AddIdentity:
                out = v(n.a);
                out.diagonal().array() += 1.0;
                break;
            case Op::AddRowVector: out = v(n.a).rowwise() + v(n.b).row(0); break;
            case Op::Relu: out = v(n.a).cwiseMax(0.0); break;
            case Op::RowSoftmax: out = softmax_rows(v(n.a)); break;
            case Op::RowLogSoftmax: out = log_softmax_rows(v(n.a)); break;
            case Op::Log: out = v(n.a).cwiseMax(kLogFloor).array().log(); break;
            case Op::Pow: out = v(n.a).array().pow(n.scalar); break;
            case Op::RowSum: out = v(n.a).rowwise().sum(); break;
            case Op::ColSum: out = v(n.a).colwise().sum(); break;
            case Op::Sum:
                out.resize(1, 1);
                out(0, 0) = v(n.a).sum();
                break;
            case Op::RowMax: {
                const Tensor& x = v(n.a);
                out.resize(x.rows(), 1);
                for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, 0) = x(i, argmax_row(x, i));
                break;
            }
            case Op::GatherRows: {
                const Tensor& x = v(n.a);
                out.resize(n.rows, x.cols());
                for (Eigen::Index r = 0; r < n.rows; ++r) out.row(r) = x.row((*n.indices)[r]);
                break;
            }
            case Op::ScaleRows: out = v(n.a).col(0).asDiagonal() * v(n.b); break;
            case Op::ScaleCols: out = v(n.a) * v(n.b).col(0).asDiagonal(); break;
            case Op::SymFromPairs: {
                const Tensor& s = v(n.a);
                const Eigen::Index m = n.rows;
                out = Tensor::Zero(m, m);
                Eigen::Index p = 0;
                for (Eigen::Index u = 0; u < m; ++u)
                    for (Eigen::Index w = u + 1; w < m; ++w, ++p) {
                        out(u, w) = s(p, 0);
                        out(w, u) = s(p, 0);
                    }
                break;
            }
        }
        if (!out.allFinite()) throw NonFiniteError(id, op_name(n.op));
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Reverse sweep

namespace {

void accumulate(std::vector<Tensor>& adj, NodeId id, const Tensor& g) {
    if (adj[id].size() == 0)
        adj[id] = g;
    else
        adj[id] += g;
}

template <typename Expr>
void accumulate_expr(std::vector<Tensor>& adj, NodeId id, const Expr& g) {
    if (adj[id].size() == 0)
        adj[id] = g;
    else
        adj[id] += g;
}

}  // namespace

NamedTensors grad(const Tape& tape, const Evaluation& eval, NodeId loss, const std::vector<std::string>& wrt) {
    if (loss >= tape.size()) throw std::out_of_range("loss node does not exist");
    const Node& ln = tape.node(loss);
    if (ln.rows != 1 || ln.cols != 1)
        throw ShapeError("loss node " + std::to_string(loss) + " is " + shape_str(ln.rows, ln.cols) + ", not scalar");

    std::vector<char> needs(tape.size(), 0);
    for (const auto& name : wrt) {
        auto it = tape.inputs().find(name);
        if (it == tape.inputs().end()) throw std::invalid_argument("gradient requested for unknown input '" + name + "'");
        needs[it->second] = 1;
    }
    for (NodeId id = 0; id < tape.size(); ++id) {
        const Node& n = tape.node(id);
        switch (n.op) {
            case Op::Input:
            case Op::Constant: break;
            case Op::MatMul:
            case Op::Hadamard:
            case Op::Add:
            case Op::Sub:
            case Op::AddRowVector:
            case Op::ScaleRows:
            case Op::ScaleCols: needs[id] = needs[n.a] || needs[n.b]; break;
            default: needs[id] = needs[n.a]; break;
        }
    }

    std::vector<Tensor> adj(tape.size());
    const auto& v = [&](NodeId id) -> const Tensor& { return eval.value(id); };
    if (needs[loss]) adj[loss] = Tensor::Ones(1, 1);

    for (NodeId id = loss + 1; id-- > 0;) {
        if (!needs[id] || adj[id].size() == 0) continue;
        const Node& n = tape.node(id);
        const Tensor& g = adj[id];
        switch (n.op) {
            case Op::Input:
            case Op::Constant: continue;  // keep adjoint for inputs
            case Op::MatMul:
                if (needs[n.a]) accumulate_expr(adj, n.a, g * v(n.b).transpose());
                if (needs[n.b]) accumulate_expr(adj, n.b, v(n.a).transpose() * g);
                break;
            case Op::SparseMatMul: accumulate_expr(adj, n.a, Tensor(n.sparse->transpose() * g)); break;
            case Op::Hadamard:
                if (needs[n.a]) accumulate_expr(adj, n.a, g.cwiseProduct(v(n.b)));
                if (needs[n.b]) accumulate_expr(adj, n.b, g.cwiseProduct(v(n.a)));
                break;
            case Op::Add:
                if (needs[n.a]) accumulate(adj, n.a, g);
                if (needs[n.b]) accumulate(adj, n.b, g);
                break;
            case Op::Sub:
                if (needs[n.a]) accumulate(adj, n.a, g);
                if (needs[n.b]) accumulate_expr(adj, n.b, -g);
                break;
            case Op::Scale: accumulate_expr(adj, n.a, n.scalar * g); break;
            case Op::AddScalar:
            case Op::AddIdentity: accumulate(adj, n.a, g); break;
            case Op::AddRowVector:
                if (needs[n.a]) accumulate(adj, n.a, g);
                if (needs[n.b]) accumulate_expr(adj, n.b, g.colwise().sum());
                break;
            case Op::Relu:
                accumulate_expr(adj, n.a, (v(n.a).array() > 0.0).select(g.array(), 0.0).matrix());
                break;
            case Op::RowSoftmax: {
                const Tensor& y = v(id);
                Tensor dx = y.cwiseProduct(g);
                const Eigen::VectorXd inner = dx.rowwise().sum();
                dx -= inner.asDiagonal() * y;
                accumulate(adj, n.a, dx);
                break;
            }
            case Op::RowLogSoftmax: {
                const Tensor p = v(id).array().exp();
                const Eigen::VectorXd gs = g.rowwise().sum();
                accumulate_expr(adj, n.a, g - Tensor(gs.asDiagonal() * p));
                break;
            }
            case Op::Log: {
                const Tensor& x = v(n.a);
                accumulate_expr(adj, n.a, (x.array() > kLogFloor).select(g.array() / x.array(), 0.0).matrix());
                break;
            }
            case Op::Pow: {
                const Tensor& x = v(n.a);
                accumulate_expr(adj, n.a, (g.array() * n.scalar * x.array().pow(n.scalar - 1.0)).matrix());
                break;
            }
            case Op::RowSum: {
                const Tensor& x = v(n.a);
                accumulate_expr(adj, n.a, g.col(0).replicate(1, x.cols()));
                break;
            }
            case Op::ColSum: {
                const Tensor& x = v(n.a);
                accumulate_expr(adj, n.a, g.row(0).replicate(x.rows(), 1));
                break;
            }
            case Op::Sum: {
                const Tensor& x = v(n.a);
                accumulate_expr(adj, n.a, Tensor::Constant(x.rows(), x.cols(), g(0, 0)));
                break;
            }
            case Op::RowMax: {
                const Tensor& x = v(n.a);
                Tensor dx = Tensor::Zero(x.rows(), x.cols());
                for (Eigen::Index i = 0; i < x.rows(); ++i) dx(i, argmax_row(x, i)) = g(i, 0);
                accumulate(adj, n.a, dx);
                break;
            }
            case Op::GatherRows: {
                const Tensor& x = v(n.a);
                Tensor dx = Tensor::Zero(x.rows(), x.cols());
                for (Eigen::Index r = 0; r < n.rows; ++r) dx.row((*n.indices)[r]) += g.row(r);
                accumulate(adj, n.a, dx);
                break;
            }
            case Op::ScaleRows:
                if (needs[n.a]) accumulate_expr(adj, n.a, g.cwiseProduct(v(n.b)).rowwise().sum());
                if (needs[n.b]) accumulate_expr(adj, n.b, v(n.a).col(0).asDiagonal() * g);
                break;
            case Op::ScaleCols:
                if (needs[n.a]) accumulate_expr(adj, n.a, g * v(n.b).col(0).asDiagonal());
                if (needs[n.b]) accumulate_expr(adj, n.b, g.cwiseProduct(v(n.a)).colwise().sum().transpose());
                break;
            case Op::SymFromPairs: {
                const Eigen::Index m = n.rows;
                Tensor ds(pair_count(m), 1);
                Eigen::Index p = 0;
                for (Eigen::Index u = 0; u < m; ++u)
                    for (Eigen::Index w = u + 1; w < m; ++w, ++p) ds(p, 0) = g(u, w) + g(w, u);
                accumulate(adj, n.a, ds);
                break;
            }
        }
        // intermediate adjoints are not needed once propagated
        adj[id] = Tensor();
    }

    NamedTensors out;
    for (const auto& name : wrt) {
        const NodeId id = tape.inputs().at(name);
        const Node& n = tape.node(id);
        out[name] = adj[id].size() ? adj[id] : Tensor::Zero(n.rows, n.cols);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences

std::string FiniteDiffReport::summary() const {
    std::ostringstream os;
    os << (pass ? "pass" : "FAIL") << " checked=" << checked << " excluded=" << excluded.size()
       << " worst_rel=" << worst_rel_error << " at entry " << worst_entry << " (analytic " << worst_analytic
       << ", numeric " << worst_numeric << ") worst_abs=" << worst_abs_error << " max_grad=" << max_abs_analytic;
    return os.str();
}

namespace {

// Activation pattern of every piecewise op; a probe whose pattern differs
// from the base point straddles a non-differentiable point.
std::vector<char> kink_signature(const Tape& tape, const Evaluation& ev) {
    std::vector<char> sig;
    for (NodeId id = 0; id < tape.size(); ++id) {
        const Node& n = tape.node(id);
        if (n.op == Op::Relu) {
            const Tensor& x = ev.value(n.a);
            for (Eigen::Index k = 0; k < x.size(); ++k) sig.push_back(x.data()[k] > 0.0);
        } else if (n.op == Op::RowMax) {
            const Tensor& x = ev.value(n.a);
            for (Eigen::Index i = 0; i < x.rows(); ++i) sig.push_back(static_cast<char>(argmax_row(x, i)));
        } else if (n.op == Op::Log) {
            const Tensor& x = ev.value(n.a);
            for (Eigen::Index k = 0; k < x.size(); ++k) sig.push_back(x.data()[k] > kLogFloor);
        }
    }
    return sig;
}

}  // namespace

FiniteDiffReport finite_diff_check(const Tape& tape, NodeId loss, const NamedTensors& inputs,
                                   const std::string& input, const FiniteDiffOptions& opts) {
    FiniteDiffReport rep;
    const Evaluation base = forward(tape, inputs);
    const Tensor analytic = grad(tape, base, loss, {input}).at(input);
    const auto base_sig = kink_signature(tape, base);

    const Tensor& x0 = inputs.at(input);
    std::vector<std::size_t> entries(static_cast<std::size_t>(x0.size()));
    for (std::size_t k = 0; k < entries.size(); ++k) entries[k] = k;
    if (opts.max_entries > 0 && opts.max_entries < entries.size()) {
        Rng rng(opts.seed, "finite-diff");
        for (std::size_t k = 0; k < opts.max_entries; ++k)
            std::swap(entries[k], entries[k + rng.below(entries.size() - k)]);
        entries.resize(opts.max_entries);
    }

    NamedTensors probe = inputs;
    Tensor& x = probe.at(input);
    for (std::size_t k : entries) {
        const double orig = x.data()[k];
        x.data()[k] = orig + opts.step;
        const Evaluation up = forward(tape, probe);
        x.data()[k] = orig - opts.step;
        const Evaluation dn = forward(tape, probe);
        x.data()[k] = orig;
        if (kink_signature(tape, up) != base_sig || kink_signature(tape, dn) != base_sig) {
            rep.excluded.push_back(k);
            continue;
        }
        const double numeric = (up.scalar(loss) - dn.scalar(loss)) / (2.0 * opts.step);
        const double a = analytic.data()[k];
        const double diff = std::abs(a - numeric);
        const double denom = std::max(std::abs(a), std::abs(numeric));
        const double rel = diff <= opts.abs_floor ? 0.0 : diff / denom;
        ++rep.checked;
        rep.worst_abs_error = std::max(rep.worst_abs_error, diff);
        rep.max_abs_analytic = std::max(rep.max_abs_analytic, std::abs(a));
        if (rep.checked == 1 || rel > rep.worst_rel_error) {
            rep.worst_rel_error = rel;
            rep.worst_entry = k;
            rep.worst_analytic = a;
            rep.worst_numeric = numeric;
        }
        if (rel > opts.tol_rel) rep.pass = false;
    }
    return rep;
}

}  // namespace hcref::grad
