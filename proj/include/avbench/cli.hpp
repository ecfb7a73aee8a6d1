#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace avbench::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one invocation. `args` excludes the program name. Results go to
/// files named by flags or to `out`; diagnostics and usage go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avbench::cli
