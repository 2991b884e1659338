#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace teeg {

// All recoverable failures (parse errors, shape mismatches, eligibility
// rejections) are reported as teeg::Error with a human-readable message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

enum class LogLevel : int { kError = 0, kInfo = 1, kDebug = 2 };

// Log level comes from TEEG_LOG={error|info|debug}; default info.
LogLevel log_level();
void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace teeg
