#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace longvid {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
bool parse_log_level(std::string_view name, LogLevel* out);

// Emits one JSON object per line on stderr: {"level":"info","msg":...,...}.
void log_event(LogLevel level, std::string_view msg,
               std::initializer_list<std::pair<std::string_view, std::string>> fields = {});

}  // namespace longvid
