#pragma once

#include <map>
#include <string>
#include <vector>

#include "physforge/util/jsonl.hpp"

namespace physforge {

extern const char* const kToolVersion;

/// Sidecar written next to every output file: enough to reproduce it and to
/// decide whether a re-run can be skipped.
struct Manifest {
  std::string command;                              // e.g. "extract"
  std::string args_hash;                            // hash of effective args
  std::map<std::string, std::string> input_hashes;  // path -> sha256
  Json extra;                                       // seeds, counts, ...
  std::string tool_version;

  Json to_json() const;
  static Manifest from_json(const Json& j);

  /// True when command, args and input hashes all match (tool version and
  /// extra metadata are informational).
  bool matches(const Manifest& other) const;
};

std::string manifest_path_for(const std::string& output_path);

Manifest make_manifest(const std::string& command,
                       const std::vector<std::string>& args,
                       const std::vector<std::string>& input_paths);

void write_manifest(const std::string& output_path, const Manifest& m);

/// True when the output and a matching manifest already exist and force is
/// off; such a stage can be skipped.
bool can_skip_stage(const std::string& output_path, const Manifest& fresh,
                    bool force);

}  // namespace physforge
