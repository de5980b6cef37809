#include "cellgan/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string_view>

namespace cellgan::log {

namespace {

Level from_env() {
  const char* v = std::getenv("CELLGAN_LOG");
  if (!v) return Level::Warn;
  const std::string_view s(v);
  if (s == "debug") return Level::Debug;
  if (s == "info") return Level::Info;
  if (s == "error") return Level::Error;
  if (s == "off") return Level::Off;
  return Level::Warn;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{from_env()};
  return level;
}

const char* tag(Level l) {
  switch (l) {
    case Level::Debug:
      return "D";
    case Level::Info:
      return "I";
    case Level::Warn:
      return "W";
    case Level::Error:
      return "E";
    default:
      return "?";
  }
}

}  // namespace

Level threshold() { return current().load(std::memory_order_relaxed); }
void set_threshold(Level level) { current().store(level, std::memory_order_relaxed); }

void write(Level level, const std::string& message) {
  static std::mutex mu;
  static const auto start = std::chrono::steady_clock::now();
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::lock_guard lock(mu);
  std::fprintf(stderr, "[%s %9.3f] %s\n", tag(level), t, message.c_str());
}

}  // namespace cellgan::log
