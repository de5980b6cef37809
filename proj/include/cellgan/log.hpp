#pragma once

#include <sstream>
#include <string>

namespace cellgan::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Threshold defaults to Warn, or CELLGAN_LOG={debug,info,warn,error,off}.
Level threshold();
void set_threshold(Level level);
void write(Level level, const std::string& message);

template <class... Args>
void emit(Level level, const Args&... args) {
  if (level < threshold()) return;
  std::ostringstream os;
  (os << ... << args);
  write(level, os.str());
}

template <class... Args>
void debug(const Args&... args) { emit(Level::Debug, args...); }
template <class... Args>
void info(const Args&... args) { emit(Level::Info, args...); }
template <class... Args>
void warn(const Args&... args) { emit(Level::Warn, args...); }
template <class... Args>
void error(const Args&... args) { emit(Level::Error, args...); }

}  // namespace cellgan::log
