#pragma once

#include <cstdint>
#include <utility>

namespace hcref {

// Unordered node pairs (u, v), u < v, enumerated in upper-triangle row-major
// order: (0,1), (0,2), ..., (0,n-1), (1,2), ...

inline constexpr std::int64_t pair_count(std::int64_t n) { return n * (n - 1) / 2; }

inline constexpr std::int64_t pair_index(std::int64_t u, std::int64_t v, std::int64_t n) {
    if (u > v) std::swap(u, v);
    return u * n - u * (u + 1) / 2 + (v - u - 1);
}

/// Inverse of pair_index.
inline std::pair<std::int64_t, std::int64_t> pair_at(std::int64_t p, std::int64_t n) {
    std::int64_t u = 0;
    std::int64_t row_len = n - 1;
    while (p >= row_len) {
        p -= row_len;
        ++u;
        --row_len;
    }
    return {u, u + 1 + p};
}

}  // namespace hcref
