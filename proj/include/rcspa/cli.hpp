#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rcspa {

enum ExitCode : int {
    kExitOk = 0,
    kExitInput = 2,
    kExitNumerical = 3,
    kExitVerification = 4,
};

/// Run the command line `args` (without the program name). Reports go to
/// `out` unless --out names a file; diagnostics and summaries go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// %.17g, with nan/inf spelled the same on every platform.
std::string format_double(double v);

}  // namespace rcspa
