#pragma once

#include <string>

namespace ecohmpc {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity comes from the ECOHMPC_LOG environment variable
/// (quiet|warn|info|debug), read once; default warn. Messages go to stderr.
LogLevel log_level();
void set_log_level(LogLevel level);
void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace ecohmpc
