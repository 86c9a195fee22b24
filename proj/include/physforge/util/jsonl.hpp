#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace physforge {

// Field order matters for the on-disk formats, so ordered_json throughout.
using Json = nlohmann::ordered_json;

std::vector<Json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<Json>& rows);

}  // namespace physforge
