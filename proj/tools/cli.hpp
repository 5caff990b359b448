#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ivrl::cli {

// Overrides run.output_dir from the config file; --out still wins.
inline constexpr const char* kOutputDirEnv = "IVRL_OUTPUT_DIR";

// `args` excludes the program name. Returns the process exit code:
// 0 success, 1 validation error, 2 runtime error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ivrl::cli
