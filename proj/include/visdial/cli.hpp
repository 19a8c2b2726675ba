#pragma once

namespace visdial {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand: validate, stats, candidates, rank, dialog-eval, lm,
/// topics, serve. Outputs go under --out; on failure nothing partial is left.
int run_cli(int argc, const char* const* argv);

}  // namespace visdial
