#pragma once

#include <string>

namespace hcref {

/// Shortest decimal string that parses back to exactly `x`.
std::string shortest_repr(double x);

/// `x` with 6 significant digits, as used in report tables.
std::string sig6(double x);

}  // namespace hcref
