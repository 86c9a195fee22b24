#pragma once

#include <string>

namespace physforge {

// All logging goes to stderr; stdout is reserved for data.
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

}  // namespace physforge
