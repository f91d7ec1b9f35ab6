#pragma once

#include <string_view>

// Diagnostics go to stderr. Verbosity comes from ASNET_LOG_LEVEL
// (error, warn, info, debug; default warn).
namespace asnet::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level level();
void set_level(Level lvl);

void error(std::string_view msg);
void warn(std::string_view msg);
void info(std::string_view msg);
void debug(std::string_view msg);

}  // namespace asnet::log
