#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spider {

/// Exit codes of the command-line front end.
enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,   ///< bound violated, property failed, non-convergence
    kExitUsage = 2,
};

/// Runs one command line (without the program name). Results go to `out`
/// unless --out names a file; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spider
