#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ttp {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitUsage = 2,     // bad flags, config, or dataset
    kExitNumeric = 3,   // training diverged
    kExitMismatch = 4,  // checkpoint does not fit the model
};

/// Entry point behind the `ttp` binary. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ttp
