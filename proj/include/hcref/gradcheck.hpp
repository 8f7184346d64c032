#pragma once

// Finite-difference verification of every gradient the pipeline relies on:
// the attack loss with respect to the relaxed flip vector (through the
// degree normalization) and the training losses with respect to the model
// parameters, on small random graphs.

#include "hcref/gradkit.hpp"
#include "hcref/graphio.hpp"
#include "hcref/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hcref::gradcheck {

struct CheckResult {
    std::string name;  // "<graph index>/<objective>/<input>"
    grad::FiniteDiffReport report;
};

struct SuiteOptions {
    int graphs = 50;
    int min_nodes = 4;
    int max_nodes = 10;
    int num_features = 5;
    int hidden = 4;
    int num_classes = 3;
    std::uint64_t seed = 0;
    grad::FiniteDiffOptions fd;
};

/// Small labeled graph with random features, edges and a two-node train split.
graphio::Graph random_graph(std::int64_t n, int d, int C, Rng& rng);

std::vector<CheckResult> run_suite(const SuiteOptions& opts = {});

}  // namespace hcref::gradcheck
