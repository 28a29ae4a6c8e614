#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace edgenet {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from the EDGENET_LOG environment variable
// (quiet|warn|info|debug). Defaults to info.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("EDGENET_LOG");
        if (!env) return LogLevel::Info;
        const std::string v(env);
        if (v == "quiet") return LogLevel::Quiet;
        if (v == "warn") return LogLevel::Warn;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

inline void log_warn(const std::string& msg) {
    if (log_level() >= LogLevel::Warn) std::cerr << "[warn] " << msg << '\n';
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << "[info] " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::cerr << "[debug] " << msg << '\n';
}

} // namespace edgenet
