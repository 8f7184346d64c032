#pragma once

// Shared test fixtures: temporary directories, small graphs, naive oracles.

#include "hcref/graphio.hpp"
#include "hcref/rng.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

namespace fixtures {

using hcref::grad::Tensor;
using hcref::graphio::Graph;

/// Directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("hcref-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& file, const std::string& text) {
    std::filesystem::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary);
    os << text;
}

inline std::string read_text(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline Tensor random_tensor(Eigen::Index r, Eigen::Index c, hcref::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = lo + (hi - lo) * rng.uniform();
    return t;
}

/// Path 0-1-2 with one-hot features and labels {0, 1, 0}.
inline Graph path3() {
    Graph g;
    g.name = "path3";
    g.num_nodes = 3;
    g.num_features = 3;
    g.num_classes = 2;
    g.features = Tensor::Identity(3, 3);
    g.edges = {{0, 1}, {1, 2}};
    g.labels = {0, 1, 0};
    g.splits.train = {0};
    g.splits.val = {1};
    g.splits.test = {2};
    return g;
}

/// Small planted-partition graph used by training and attack tests.
inline Graph synthetic(hcref::graphio::NodeIndex n = 40, std::uint64_t seed = 3) {
    hcref::graphio::SyntheticOptions o;
    o.num_nodes = n;
    o.num_classes = 3;
    o.num_features = 16;
    o.train_size = n / 4;
    o.val_size = n / 8;
    o.seed = seed;
    return hcref::graphio::make_synthetic(o);
}

/// Naive triple-loop product.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c = Tensor::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

/// D^-1/2 (A + I) D^-1/2 written entrywise.
inline Tensor naive_normalize(const Tensor& a) {
    const auto n = a.rows();
    std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        deg[i] = 1.0;
        for (Eigen::Index j = 0; j < n; ++j) deg[i] += a(i, j);
    }
    Tensor out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out(i, j) = (a(i, j) + (i == j ? 1.0 : 0.0)) / std::sqrt(deg[i] * deg[j]);
    return out;
}

}  // namespace fixtures
