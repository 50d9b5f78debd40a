#pragma once

namespace pgsmm {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kExitNumericalError = 4;

int run_cli(int argc, char** argv);

}  // namespace pgsmm
