#include "nirstext/config.hpp"

#include <charconv>

#include "nirstext/errors.hpp"
#include "nirstext/fileio.hpp"
#include "nirstext/hash.hpp"
#include "nirstext/log.hpp"

namespace nirstext {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
  return from_string(io::read_text(path));
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  int lineno = 0;
  for (const auto& raw : io::split_lines(text)) {
    ++lineno;
    const auto hash_pos = raw.find('#');
    const std::string line = trim(hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " has no '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + " has empty key");
    if (cfg.kv_.count(key))
      log::warn("config key '" + key + "' given more than once, keeping the last value");
    cfg.kv_[key] = value;
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_str(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::int64_t out = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "' is not an integer: " + s);
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  double out = 0.0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "' is not a number: " + s);
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + s);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::uint64_t out = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "' is not an unsigned integer: " + s);
  return out;
}

void Config::check_known(const std::set<std::string>& known) const {
  for (const auto& [k, v] : kv_)
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out.push_back('=');
    out += v;
    out.push_back('\n');
  }
  return out;
}

std::string Config::hash_hex() const {
  const std::string c = canonical();
  return hex64(fnv1a64(c.data(), c.size()));
}

}  // namespace nirstext
