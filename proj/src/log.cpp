#include "physforge/log.hpp"

#include <iostream>
#include <mutex>

namespace physforge {

namespace {
std::mutex g_log_mutex;

void emit(const char* level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "physforge " << level << ": " << msg << "\n";
}
}  // namespace

void log_info(const std::string& msg) { emit("info", msg); }
void log_warn(const std::string& msg) { emit("warning", msg); }
void log_error(const std::string& msg) { emit("error", msg); }

}  // namespace physforge
