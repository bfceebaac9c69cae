#pragma once

#include <string>
#include <vector>

namespace slidebench {

/// Exit status of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Runs one `slidebench` invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace slidebench
