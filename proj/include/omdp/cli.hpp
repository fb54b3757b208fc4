#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace omdp {

/// Process exit codes of the omdp tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitValidation = 2,
    kExitNonConvergence = 3,
    kExitIo = 4,
    kExitTruncation = 5,
    kExitMissingInput = 6,
};

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace omdp
