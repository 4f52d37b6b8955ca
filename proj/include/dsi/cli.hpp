#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dsi {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command line tool.
enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitUsage = 2 };

/// Runs the command line tool. args[0] is the program name. Diagnostics go
/// to `err`, short progress lines to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsi
