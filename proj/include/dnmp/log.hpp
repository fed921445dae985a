#pragma once

#include <cstddef>
#include <string_view>

namespace dnmp::log {

// Warnings go to stderr unless silenced; the counter always advances so
// tests can observe them.
void warn(std::string_view message);
std::size_t warning_count();
void set_quiet(bool quiet);

}  // namespace dnmp::log
