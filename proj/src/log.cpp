#include "asnet/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace asnet::log {

namespace {

Level from_env() {
  const char* env = std::getenv("ASNET_LOG_LEVEL");
  if (env == nullptr) return Level::warn;
  const std::string v(env);
  if (v == "error") return Level::error;
  if (v == "info") return Level::info;
  if (v == "debug") return Level::debug;
  return Level::warn;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(from_env())};
  return lvl;
}

void emit(Level lvl, const char* tag, std::string_view msg) {
  if (static_cast<int>(lvl) > current().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << '[' << tag << "] " << msg << '\n';
}

}  // namespace

Level level() { return static_cast<Level>(current().load()); }
void set_level(Level lvl) { current().store(static_cast<int>(lvl)); }

void error(std::string_view msg) { emit(Level::error, "error", msg); }
void warn(std::string_view msg) { emit(Level::warn, "warn", msg); }
void info(std::string_view msg) { emit(Level::info, "info", msg); }
void debug(std::string_view msg) { emit(Level::debug, "debug", msg); }

}  // namespace asnet::log
