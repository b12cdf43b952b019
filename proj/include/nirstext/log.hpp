#pragma once

#include <functional>
#include <string>

namespace nirstext::log {

enum class Level { info, warn };

using Sink = std::function<void(Level, const std::string&)>;

// Default sink writes to stderr. Tests install their own sink to assert on
// emitted warnings; set_sink(nullptr) restores the default.
void set_sink(Sink sink);

void info(const std::string& msg);
void warn(const std::string& msg);

}  // namespace nirstext::log
