#pragma once

// Dataset ingestion, the canonical on-disk graph format, and adjacency
// preprocessing shared by training and attacks.

#include "hcref/gradkit.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hcref::graphio {

using grad::SparseMatrix;
using grad::Tensor;

using NodeIndex = std::int64_t;
using Edge = std::pair<NodeIndex, NodeIndex>;  // u < v

class GraphLoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Splits {
    std::vector<NodeIndex> train;
    std::vector<NodeIndex> val;
    std::vector<NodeIndex> test;
};

/// Undirected, unweighted attributed graph with semi-supervised splits.
/// Immutable after load.
struct Graph {
    std::string name;
    NodeIndex num_nodes = 0;
    NodeIndex num_features = 0;
    int num_classes = 0;
    Tensor features;           // num_nodes x num_features
    std::vector<Edge> edges;   // sorted, u < v, no duplicates
    std::vector<int> labels;   // in [0, num_classes)
    Splits splits;

    std::size_t num_edges() const { return edges.size(); }
};

/// Throws GraphLoadError naming the first violated invariant.
void validate(const Graph& g);

// ---------------------------------------------------------------------------
// Adjacency views

SparseMatrix adjacency(const Graph& g);
SparseMatrix adjacency_from_edges(NodeIndex n, const std::vector<Edge>& edges);
Tensor dense_adjacency(const Graph& g);
Tensor dense_adjacency(NodeIndex n, const std::vector<Edge>& edges);

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I. Accepts continuous
/// entries in [0,1].
Tensor normalize_adjacency(const Tensor& a);
SparseMatrix normalize_adjacency(const SparseMatrix& a);

/// 1 - A off the diagonal, 0 on it.
Tensor complement_mask(const Tensor& a);

// ---------------------------------------------------------------------------
// Canonical format: meta.json, features.tsv, edges.tsv, labels.tsv, splits.json

struct PrepareOptions {
    std::string name;                  // defaults to the raw file stem
    int train_per_class = 20;          // M = train_per_class * num_classes
    std::int64_t train_size = -1;      // overrides train_per_class when >= 0
    std::int64_t val_size = 500;
    bool drop_dangling_citations = false;
};

struct PrepareReport {
    NodeIndex num_nodes = 0;
    std::size_t num_edges = 0;          // undirected, deduplicated
    std::size_t num_citation_lines = 0; // raw lines in the cites file
    std::size_t dropped_self_loops = 0;
    std::size_t dropped_duplicates = 0;
    std::size_t dropped_dangling = 0;
};

/// Converts a raw `<name>.content` / `<name>.cites` pair into the canonical
/// directory. Nodes keep content-file order; classes are numbered in sorted
/// name order.
PrepareReport prepare_dataset(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                              const PrepareOptions& opts = {});

struct LoadOptions {
    bool row_normalize_features = true;
};

Graph load_graph(const std::filesystem::path& dataset_dir, const LoadOptions& opts = {});

/// Writes `g` in canonical form. Feature values use shortest round-trip
/// formatting and zero entries are omitted.
void write_graph(const Graph& g, const std::filesystem::path& out_dir);

/// Scales each feature row to unit l1 norm; all-zero rows are left as is.
Tensor row_normalize(const Tensor& x);

// ---------------------------------------------------------------------------
// Synthetic graphs for tests and smoke runs

struct SyntheticOptions {
    NodeIndex num_nodes = 60;
    int num_classes = 3;
    NodeIndex num_features = 24;
    double p_in = 0.15;    // edge probability within a class
    double p_out = 0.02;   // edge probability across classes
    double feature_on = 0.35;   // chance a class-topic feature is set
    double feature_noise = 0.05;
    NodeIndex train_size = 15;
    NodeIndex val_size = 15;
    std::uint64_t seed = 0;
};

/// Contextual stochastic block model: planted-partition edges and
/// class-correlated binary features. Labels are round-robin shuffled so every
/// class appears in the first train_size nodes when train_size >= classes.
Graph make_synthetic(const SyntheticOptions& opts);

}  // namespace hcref::graphio
