#pragma once

#include <ostream>

namespace acs::cli {

// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumerical = 4;

/// Entry point of the `acsnet` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace acs::cli
