#include "tiered/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

#include "tiered/error.hpp"

namespace tiered {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warn};
std::mutex g_mu;
} // namespace

void set_log_level(LogLevel level) {
    g_level.store(level);
}

LogLevel log_level() {
    return g_level.load();
}

LogLevel parse_log_level(std::string_view name) {
    if (name == "debug") {
        return LogLevel::Debug;
    }
    if (name == "info") {
        return LogLevel::Info;
    }
    if (name == "warn") {
        return LogLevel::Warn;
    }
    if (name == "error") {
        return LogLevel::Error;
    }
    if (name == "off") {
        return LogLevel::Off;
    }
    throw_error(ErrorKind::InvalidArgument, "unknown log level '" + std::string(name) + "'");
}

void log_message(LogLevel level, std::string_view msg) {
    if (level < g_level.load()) {
        return;
    }
    static constexpr const char* names[] = {"debug", "info", "warn", "error"};
    std::lock_guard lock(g_mu);
    std::clog << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

} // namespace tiered
