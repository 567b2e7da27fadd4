#pragma once

#include <string>
#include <vector>

namespace anatpaste::app {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUnexpected = 1,
    kExitUsage = 2,        // bad flags or configuration
    kExitIo = 3,           // unreadable or malformed files
    kExitComputation = 4,  // a stage could not produce a result
};

/// Parses `args` (without the program name) and runs the subcommand.
/// Diagnostics go to stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace anatpaste::app
