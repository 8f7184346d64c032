#pragma once

// Reverse-mode differentiation over a fixed set of dense matrix primitives.
//
// A Tape is built once (a DAG in topological order) and then evaluated any
// number of times against different named inputs. Gradients are obtained by
// a single reverse sweep over a forward Evaluation.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcref::grad {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using NodeId = std::size_t;
using NamedTensors = std::map<std::string, Tensor>;
using IndexList = std::vector<Eigen::Index>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(NodeId node, const std::string& op);
    NodeId node() const { return node_; }

private:
    NodeId node_;
};

enum class Op {
    Input,
    Constant,
    MatMul,
    SparseMatMul,
    Hadamard,
    Add,
    Sub,
    Scale,
    AddScalar,
    AddIdentity,
    AddRowVector,
    Relu,
    RowSoftmax,
    RowLogSoftmax,
    Log,
    Pow,
    RowSum,
    ColSum,
    Sum,
    RowMax,
    GatherRows,
    ScaleRows,
    ScaleCols,
    SymFromPairs,
};

const char* op_name(Op op);

struct Node {
    Op op = Op::Input;
    NodeId a = 0;
    NodeId b = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    double scalar = 0.0;
    std::string name;                          // Input only
    std::shared_ptr<const Tensor> constant;    // Constant only
    std::shared_ptr<const IndexList> indices;  // GatherRows only
    std::shared_ptr<const SparseMatrix> sparse;  // SparseMatMul only
};

/// Lower clamp applied inside Log; entries below it map to log(kLogFloor)
/// and receive zero gradient.
inline constexpr double kLogFloor = 1e-12;

class Tape {
public:
    NodeId input(const std::string& name, Eigen::Index rows, Eigen::Index cols);
    NodeId constant(Tensor value);
    NodeId constant(std::shared_ptr<const Tensor> value);

    NodeId matmul(NodeId a, NodeId b);
    /// Constant sparse matrix times a dense node.
    NodeId sparse_matmul(std::shared_ptr<const SparseMatrix> lhs, NodeId b);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_scalar(NodeId a, double c);
    /// a + I for square a.
    NodeId add_identity(NodeId a);
    /// Adds a 1 x cols row vector to every row of a.
    NodeId add_row_vector(NodeId a, NodeId row);
    NodeId relu(NodeId a);
    NodeId row_softmax(NodeId a);
    NodeId row_log_softmax(NodeId a);
    NodeId log(NodeId a);
    /// Elementwise a^p; non-integer p requires positive entries.
    NodeId pow(NodeId a, double p);
    NodeId row_sum(NodeId a);
    NodeId col_sum(NodeId a);
    NodeId sum(NodeId a);
    /// Per-row maximum as a column vector; ties resolve to the first column.
    NodeId row_max(NodeId a);
    NodeId gather_rows(NodeId a, IndexList rows);
    /// diag(d) * m, with d a rows x 1 column vector.
    NodeId scale_rows(NodeId d, NodeId m);
    /// m * diag(d), with d a cols x 1 column vector.
    NodeId scale_cols(NodeId m, NodeId d);
    /// Symmetric n x n matrix with zero diagonal from an n(n-1)/2 x 1 vector
    /// laid out in upper-triangle row-major pair order.
    NodeId sym_from_pairs(NodeId pairs, Eigen::Index n);

    void mark_output(const std::string& name, NodeId id);

    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }
    const std::map<std::string, NodeId>& outputs() const { return outputs_; }
    const std::map<std::string, NodeId>& inputs() const { return inputs_; }

private:
    NodeId push(Node n);
    const Node& check(NodeId id) const;

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> inputs_;
    std::map<std::string, NodeId> outputs_;
};

/// Values of every node from one forward pass.
class Evaluation {
public:
    /// Constants are not copied into the evaluation; their value is the
    /// tape's own tensor.
    const Tensor& value(NodeId id) const;
    const Tensor& output(const std::string& name) const;
    double scalar(NodeId id) const;
    NamedTensors outputs() const;

private:
    friend Evaluation forward(const Tape& tape, const NamedTensors& inputs);
    std::vector<Tensor> values_;
    const Tape* tape_ = nullptr;
};

/// Evaluates the tape. Throws ShapeError on missing or mis-shaped inputs and
/// NonFiniteError naming the first node that produced a non-finite entry.
Evaluation forward(const Tape& tape, const NamedTensors& inputs);

/// Gradients of the scalar node `loss` with respect to the named inputs.
NamedTensors grad(const Tape& tape, const Evaluation& eval, NodeId loss,
                  const std::vector<std::string>& wrt);

struct FiniteDiffOptions {
    double step = 1e-5;
    double tol_rel = 1e-4;
    double abs_floor = 1e-7;
    /// 0 checks every entry; otherwise a seeded sample of this many entries.
    std::size_t max_entries = 0;
    std::uint64_t seed = 0;
};

struct FiniteDiffReport {
    bool pass = true;
    std::size_t checked = 0;
    /// Entries whose +-step probe crossed a relu kink or changed a row_max
    /// winner; the central difference is meaningless there.
    std::vector<std::size_t> excluded;
    double worst_rel_error = 0.0;
    std::size_t worst_entry = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double worst_abs_error = 0.0;
    /// Largest checked analytic entry; 0 means the check was vacuous.
    double max_abs_analytic = 0.0;

    std::string summary() const;
};

FiniteDiffReport finite_diff_check(const Tape& tape, NodeId loss, const NamedTensors& inputs,
                                   const std::string& input, const FiniteDiffOptions& opts = {});

}  // namespace hcref::grad
