#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace implicit_motion {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitInput = 2;

// implicit-motion {check|degree|simulate|reactive|trace|example} [file] [flags]
// `args` excludes the program name. A problem argument that is not an
// existing file is looked up among the built-in problems.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace implicit_motion
