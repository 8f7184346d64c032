#pragma once

// Two graph-convolution layers (feature extractor) followed by one fully
// connected layer (classifier head), and the losses used for training and
// attacks.

#include "hcref/gradkit.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace hcref::model {

using grad::NodeId;
using grad::SparseMatrix;
using grad::Tape;
using grad::Tensor;
using NodeSet = std::vector<std::int64_t>;

struct ModelParams {
    Tensor W1;  // d x h
    Tensor W2;  // h x h
    Tensor w;   // h x C
    Tensor b;   // 1 x C
    bool freeze_encoder = false;
    bool freeze_head = false;
    std::uint64_t seed = 0;

    std::int64_t d() const { return W1.rows(); }
    std::int64_t h() const { return W1.cols(); }
    std::int64_t C() const { return w.cols(); }
};

/// Glorot-uniform weights, zero bias, deterministic in seed.
ModelParams init_params(std::uint64_t seed, std::int64_t d, std::int64_t h, std::int64_t C);

bool encoder_equal(const ModelParams& a, const ModelParams& b);
bool head_equal(const ModelParams& a, const ModelParams& b);

nlohmann::json to_json(const ModelParams& p);
ModelParams params_from_json(const nlohmann::json& j);
void save_params(const ModelParams& p, const std::filesystem::path& file);
ModelParams load_params(const std::filesystem::path& file);

enum class HeadActivation { Relu, Linear };

// ---------------------------------------------------------------------------
// Tape builders

/// Tape input names of the parameter groups.
inline constexpr const char* kW1 = "W1";
inline constexpr const char* kW2 = "W2";
inline constexpr const char* kHeadW = "w";
inline constexpr const char* kHeadB = "b";

struct ParamNodes {
    NodeId W1, W2, w, b;
};

/// Declares W1, W2, w, b as tape inputs.
ParamNodes declare_params(Tape& tape, std::int64_t d, std::int64_t h, std::int64_t C);
/// Embeds fixed parameters as constants (attacker view: W is not optimized).
ParamNodes constant_params(Tape& tape, const ModelParams& p);
grad::NamedTensors param_inputs(const ModelParams& p);

/// Normalized adjacency operand: a dense tape node or a fixed sparse matrix.
struct AdjOperand {
    std::optional<NodeId> dense;
    std::shared_ptr<const SparseMatrix> sparse;

    static AdjOperand of(NodeId id) { return {id, nullptr}; }
    static AdjOperand of(std::shared_ptr<const SparseMatrix> m) { return {std::nullopt, std::move(m)}; }
};

struct ForwardNodes {
    NodeId H;  // n x h, post-activation of layer 2
    NodeId Z;  // n x C logits
};

/// H = relu(Â relu(Â X W1) W2), Z = act(H w + b). When `xw1` is given it is
/// used in place of X W1 (lets the attack reuse a constant product).
ForwardNodes build_forward(Tape& tape, const AdjOperand& adj, NodeId x, const ParamNodes& p,
                           HeadActivation head, std::optional<NodeId> xw1 = std::nullopt);

/// Head only: Z = act(H w + b).
NodeId build_head(Tape& tape, NodeId h, const ParamNodes& p, HeadActivation head);

/// -sum_i log softmax(Z_i)[y_i] over `nodes` (mean when mean_reduce).
NodeId build_ce_loss(Tape& tape, NodeId z, std::span<const int> labels, const NodeSet& nodes, bool mean_reduce = false);
/// sum_i max(Z_{i,y_i} - max_{c != y_i} Z_{i,c}, -kappa).
NodeId build_cw_margin(Tape& tape, NodeId z, std::span<const int> labels, const NodeSet& nodes, double kappa);
/// sum_i KL(softmax(adv_i) || softmax(nat_i)).
NodeId build_kl_smooth(Tape& tape, NodeId adv, NodeId nat, const NodeSet& nodes, bool mean_reduce = false);

// ---------------------------------------------------------------------------
// Value-level API

struct ForwardOutputs {
    Tensor H;
    Tensor Z;
};

ForwardOutputs forward(const ModelParams& p, const SparseMatrix& adj_hat, const Tensor& x,
                       HeadActivation head = HeadActivation::Relu);
ForwardOutputs forward(const ModelParams& p, const Tensor& adj_hat, const Tensor& x,
                       HeadActivation head = HeadActivation::Relu);

double ce_loss(const Tensor& z, std::span<const int> labels, const NodeSet& nodes, bool mean_reduce = false);
double cw_margin(const Tensor& z, std::span<const int> labels, const NodeSet& nodes, double kappa);
double kl_smooth(const Tensor& z_adv, const Tensor& z_nat, const NodeSet& nodes);

/// Row argmax; ties go to the smallest class index.
std::vector<int> predict(const Tensor& z);
double accuracy(std::span<const int> pred, std::span<const int> labels, const NodeSet& nodes);

}  // namespace hcref::model
