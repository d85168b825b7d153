#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cubesounder::cli {

enum ExitCode : int { ok = 0, failure = 1, not_converged = 2, no_cycles = 3 };

/// Runs the tool with argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace cubesounder::cli
