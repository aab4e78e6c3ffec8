#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace featdiff::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3 };

Level threshold();
void set_threshold(Level level);

void write(Level level, std::string_view message);

template <typename... Args>
void info(const Args&... args) {
  if (threshold() > Level::Info) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::Info, os.str());
}

template <typename... Args>
void warn(const Args&... args) {
  if (threshold() > Level::Warn) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::Warn, os.str());
}

template <typename... Args>
void debug(const Args&... args) {
  if (threshold() > Level::Debug) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::Debug, os.str());
}

}  // namespace featdiff::log
