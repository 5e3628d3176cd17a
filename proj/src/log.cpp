#include "longvid/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include <json.hpp>

namespace longvid {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::warn)};
std::mutex g_mu;

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    case LogLevel::off: return "off";
  }
  return "info";
}
}  // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

bool parse_log_level(std::string_view name, LogLevel* out) {
  if (name == "debug") *out = LogLevel::debug;
  else if (name == "info") *out = LogLevel::info;
  else if (name == "warn") *out = LogLevel::warn;
  else if (name == "error") *out = LogLevel::error;
  else if (name == "off") *out = LogLevel::off;
  else return false;
  return true;
}

void log_event(LogLevel level, std::string_view msg,
               std::initializer_list<std::pair<std::string_view, std::string>> fields) {
  if (static_cast<int>(level) < g_level.load()) return;
  nlohmann::json j;
  j["level"] = level_name(level);
  j["msg"] = std::string(msg);
  for (const auto& [key, value] : fields) j[std::string(key)] = value;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << j.dump() << "\n";
}

}  // namespace longvid
