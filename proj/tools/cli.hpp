#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace phil {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "PHIL_OUTPUT_DIR";

/// Parses and runs one command line; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phil
