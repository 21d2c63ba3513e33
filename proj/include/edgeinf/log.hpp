#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace edgeinf::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Controlled by EDGE_INFLUENCE_LOG={error|info|debug}; default error.
inline Level level() {
  static Level lvl = [] {
    const char* e = std::getenv("EDGE_INFLUENCE_LOG");
    if (e == nullptr) return Level::Error;
    if (std::strcmp(e, "debug") == 0) return Level::Debug;
    if (std::strcmp(e, "info") == 0) return Level::Info;
    return Level::Error;
  }();
  return lvl;
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (level() >= Level::Info) {
    std::fprintf(stderr, "[info] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void debug(const char* fmt, Args... args) {
  if (level() >= Level::Debug) {
    std::fprintf(stderr, "[debug] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void error(const char* fmt, Args... args) {
  std::fprintf(stderr, "[error] ");
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

}  // namespace edgeinf::log
