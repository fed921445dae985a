#include "dnmp/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace dnmp::log {

namespace {
std::atomic<std::size_t> g_count{0};
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void warn(std::string_view message) {
  ++g_count;
  if (g_quiet) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

std::size_t warning_count() { return g_count; }

void set_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace dnmp::log
