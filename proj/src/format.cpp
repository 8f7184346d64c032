#include "hcref/format.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace hcref {

std::string shortest_repr(double x) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

std::string sig6(double x) {
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), "%.6g", x);
    return std::string(buf.data());
}

}  // namespace hcref
