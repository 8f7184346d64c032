#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage error. Errors go to the error stream as one JSON line
// {"error": <kind>, "message": <text>}.

#include <ostream>
#include <string>
#include <vector>

namespace hcref::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hcref::cli
