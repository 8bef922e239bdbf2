#pragma once

#include <iosfwd>

namespace polcolor {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitNumericalFailure = 3;

/// Entry point of the polcolor tool: subcommands synth, train, colorize, eval
/// and decomp. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace polcolor
