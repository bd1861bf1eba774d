#include "cromo/log.hpp"

#include <atomic>
#include <iostream>

namespace cromo {

namespace {
std::atomic<bool> g_enabled{true};
std::atomic<long> g_count{0};
}  // namespace

void log_warn(const std::string& msg) {
    ++g_count;
    if (g_enabled) std::cerr << "warning: " << msg << '\n';
}

void set_warnings_enabled(bool on) { g_enabled = on; }

long warning_count() { return g_count; }

}  // namespace cromo
