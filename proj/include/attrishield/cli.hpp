#pragma once

#include <iosfwd>

namespace attrishield::cli {

/// Entry point shared by the `attrishield` binary and the in-process tests.
/// argv follows main() conventions (argv[0] is the program name). Output is
/// written to `out` and error diagnostics to `err`. Returns the process exit
/// code: 0 success, 1 validation or runtime failure, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace attrishield::cli
