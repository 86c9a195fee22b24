#pragma once

#include <string>
#include <vector>

namespace physforge {

/// Entry point behind the `physforge` binary. Returns the process exit
/// status: 0 on success, 1 on configuration or runtime errors, 2 on usage
/// errors.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace physforge
