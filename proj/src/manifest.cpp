#include "physforge/manifest.hpp"

#include <filesystem>

#include "physforge/util/hash.hpp"
#include "physforge/util/strings.hpp"

namespace physforge {

const char* const kToolVersion = "physforge 0.1.0";

Json Manifest::to_json() const {
  Json j;
  j["command"] = command;
  j["args_hash"] = args_hash;
  j["input_hashes"] = input_hashes;
  j["extra"] = extra;
  j["tool_version"] = tool_version;
  return j;
}

Manifest Manifest::from_json(const Json& j) {
  Manifest m;
  m.command = j.value("command", std::string());
  m.args_hash = j.value("args_hash", std::string());
  if (j.contains("input_hashes")) {
    for (const auto& [path, hash] : j.at("input_hashes").items()) {
      m.input_hashes[path] = hash.get<std::string>();
    }
  }
  m.extra = j.value("extra", Json::object());
  m.tool_version = j.value("tool_version", std::string());
  return m;
}

bool Manifest::matches(const Manifest& other) const {
  return command == other.command && args_hash == other.args_hash &&
         input_hashes == other.input_hashes;
}

std::string manifest_path_for(const std::string& output_path) {
  return output_path + ".manifest.json";
}

Manifest make_manifest(const std::string& command,
                       const std::vector<std::string>& args,
                       const std::vector<std::string>& input_paths) {
  Manifest m;
  m.command = command;
  std::string material = command;
  for (const std::string& a : args) {
    material += "\x1f";
    material += a;
  }
  m.args_hash = sha256_hex(material);
  for (const std::string& path : input_paths) {
    m.input_hashes[path] = sha256_file_hex(path);
  }
  m.tool_version = kToolVersion;
  return m;
}

void write_manifest(const std::string& output_path, const Manifest& m) {
  atomic_write_file(manifest_path_for(output_path), m.to_json().dump(2) + "\n");
}

bool can_skip_stage(const std::string& output_path, const Manifest& fresh,
                    bool force) {
  if (force) return false;
  namespace fs = std::filesystem;
  if (!fs::exists(output_path)) return false;
  const std::string mpath = manifest_path_for(output_path);
  if (!fs::exists(mpath)) return false;
  try {
    const Manifest existing = Manifest::from_json(Json::parse(read_file(mpath)));
    return existing.matches(fresh);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace physforge
