#include "teeg/common.hpp"

#include <mutex>

namespace teeg {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("TEEG_LOG");
    if (!env) return LogLevel::kInfo;
    std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

namespace {
std::mutex g_log_mutex;

void emit(const char* tag, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}
}  // namespace

void log_error(const std::string& msg) {
  if (log_level() >= LogLevel::kError) emit("error", msg);
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) emit("info", msg);
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug) emit("debug", msg);
}

}  // namespace teeg
