#pragma once

#include <string>
#include <vector>

namespace physforge {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  bool spawn_failed = false;
  std::string output;  // stdout and stderr, interleaved
  double wall_seconds = 0.0;
};

/// Runs argv[0] with argv[1..] in `cwd` (current dir when empty), merging
/// stdout/stderr into one stream. On timeout the whole process group is
/// killed with SIGKILL. spawn_failed is set when the executable cannot be
/// launched at all.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::string& cwd, double timeout_seconds);

}  // namespace physforge
