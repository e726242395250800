#include "gdis/common.hpp"

#include <cstdio>
#include <cstdlib>

namespace gdis {

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("GDIS_LOG");
        if (env == nullptr) return LogLevel::Info;
        std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

void log_error(const std::string& msg) {
    std::fprintf(stderr, "[error] %s\n", msg.c_str());
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info)
        std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug)
        std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace gdis
