#include "ecohmpc/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string_view>

namespace ecohmpc {
namespace {

LogLevel from_env() {
  const char* env = std::getenv("ECOHMPC_LOG");
  if (env == nullptr) return LogLevel::warn;
  const std::string_view s(env);
  if (s == "quiet") return LogLevel::quiet;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

void emit(LogLevel lvl, const char* tag, const std::string& msg) {
  if (static_cast<int>(lvl) <= level_storage().load()) std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }
void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }
void log_warn(const std::string& msg) { emit(LogLevel::warn, "warn", msg); }
void log_info(const std::string& msg) { emit(LogLevel::info, "info", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::debug, "debug", msg); }

}  // namespace ecohmpc
