#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace advface {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "ADVFACE_OUTPUT_ROOT";

enum ExitCode : int { kExitOk = 0, kExitContract = 1, kExitUsage = 2 };

// Entry point shared by the executable and the tests. `args` excludes the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advface
