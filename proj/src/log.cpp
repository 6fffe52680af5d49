#include "deglink/log.hpp"

#include <atomic>
#include <iostream>

namespace deglink {

namespace {
std::atomic<bool> g_warnings{true};
std::atomic<bool> g_verbose{false};
}  // namespace

void warn(std::string_view message) {
  if (g_warnings.load()) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

void info(std::string_view message) {
  if (g_verbose.load()) std::cerr << message << '\n';
}

void set_verbose(bool verbose) { g_verbose.store(verbose); }

}  // namespace deglink
