#pragma once

#include <string_view>

namespace tiered {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
LogLevel parse_log_level(std::string_view name);

void log_message(LogLevel level, std::string_view msg);

inline void log_debug(std::string_view msg) {
    log_message(LogLevel::Debug, msg);
}
inline void log_info(std::string_view msg) {
    log_message(LogLevel::Info, msg);
}
inline void log_warn(std::string_view msg) {
    log_message(LogLevel::Warn, msg);
}

} // namespace tiered
