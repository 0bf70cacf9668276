#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crossfuse {

/// Environment variable that overrides paths.output.
inline constexpr const char* kOutputEnv = "CROSSFUSE_OUTPUT_DIR";

/// Runs one subcommand (prepare, train-aux, train, evaluate, ablate,
/// verify-gradients). Returns the process exit status: 0 success, 1 usage,
/// 2 config, 3 data, 4 numerical failure.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crossfuse
