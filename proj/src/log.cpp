#include "featdiff/log.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>

namespace featdiff::log {
namespace {

Level initial_level() {
  const char* env = std::getenv("FEATDIFF_LOG");
  if (env == nullptr) return Level::Info;
  const std::string v{env};
  if (v == "debug") return Level::Debug;
  if (v == "warn") return Level::Warn;
  if (v == "error") return Level::Error;
  return Level::Info;
}

std::atomic<Level>& level_ref() {
  static std::atomic<Level> level{initial_level()};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level threshold() { return level_ref().load(std::memory_order_relaxed); }

void set_threshold(Level level) { level_ref().store(level, std::memory_order_relaxed); }

void write(Level level, std::string_view message) {
  static constexpr std::string_view tags[] = {"[debug] ", "[info] ", "[warn] ", "[error] "};
  std::lock_guard lock(sink_mutex());
  std::clog << tags[static_cast<int>(level)] << message << '\n';
}

}  // namespace featdiff::log
