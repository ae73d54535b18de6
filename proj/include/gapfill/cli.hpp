#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gapfill {

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitParse = 3,
  kExitInsufficientData = 4,
  kExitMismatch = 5,
};

// Runs one command (`args` excludes the program name). Never throws; errors
// are reported on `err` and mapped to an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gapfill
