#pragma once

#include <iosfwd>

namespace strucdiff::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumerical = 4 };

// Runs one subcommand. Diagnostics (epoch log lines, warnings, the single
// JSON error line) go to `err`; help text goes to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace strucdiff::cli
