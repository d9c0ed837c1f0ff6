#pragma once

#include <iosfwd>

namespace streetsafe::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

/// Parses argv and runs one subcommand. Progress goes to `log`, errors to
/// `err`.
int run(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

}  // namespace streetsafe::cli
