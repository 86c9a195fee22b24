#include "physforge/util/jsonl.hpp"

#include <fstream>

#include "physforge/errors.hpp"

namespace physforge {

std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read jsonl file: " + path);
  }
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": invalid json: " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write jsonl file: " + path);
  }
  for (const Json& row : rows) {
    out << row.dump() << "\n";
  }
  if (!out) {
    throw ConfigError("short write: " + path);
  }
}

}  // namespace physforge
