#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hcref {

/// Seedable generator with named, independent substreams.
///
/// Each substream is an mt19937_64 seeded through splitmix64 from the run
/// seed and the FNV-1a hash of the stream name. Uniform draws are produced
/// here rather than through <random> distributions, whose output is not
/// specified by the standard, so results match across standard libraries.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64/splitmix64-substreams/v1";

    Rng(std::uint64_t seed, std::string_view stream);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

}  // namespace hcref
