#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

#include "agma/util/errors.hpp"

namespace agma::util {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel parse_log_level(std::string_view s) {
    if (s == "error") return LogLevel::error;
    if (s == "warn") return LogLevel::warn;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    throw ConfigError("AGMA_LOG must be one of error, warn, info, debug");
}

/// Level from AGMA_LOG, `info` when unset.
inline LogLevel& log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("AGMA_LOG");
        return env == nullptr || *env == '\0' ? LogLevel::info : parse_log_level(env);
    }();
    return level;
}

inline void log(LogLevel level, const std::string& msg) {
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    if (static_cast<int>(level) <= static_cast<int>(log_level()))
        std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace agma::util
