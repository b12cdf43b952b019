#include "nirstext/log.hpp"

#include <iostream>

namespace nirstext::log {

namespace {
Sink g_sink;  // empty -> default stderr sink

void emit_default(Level level, const std::string& msg) {
  std::cerr << (level == Level::warn ? "[warn] " : "[info] ") << msg << "\n";
}
}  // namespace

void set_sink(Sink sink) { g_sink = std::move(sink); }

void info(const std::string& msg) {
  if (g_sink) g_sink(Level::info, msg);
  else emit_default(Level::info, msg);
}

void warn(const std::string& msg) {
  if (g_sink) g_sink(Level::warn, msg);
  else emit_default(Level::warn, msg);
}

}  // namespace nirstext::log
