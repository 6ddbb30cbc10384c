#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace podhive::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

/// Runs the command line `args` (without the program name). `serve` and
/// `kernel` block until their peer goes away.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace podhive::cli
