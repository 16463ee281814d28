#pragma once

#include <ostream>

namespace hqa::cli {

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command line (argv[0] is the program name). Summaries go to out,
/// diagnostics to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hqa::cli
