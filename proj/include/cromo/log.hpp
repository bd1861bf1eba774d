#pragma once

#include <string>

namespace cromo {

// Warnings go to stderr unless silenced (tests silence expected ones).
void log_warn(const std::string& msg);
void set_warnings_enabled(bool on);
// Number of warnings issued since start, silenced ones included.
long warning_count();

}  // namespace cromo
