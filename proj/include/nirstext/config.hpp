#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace nirstext {

// Flat key=value configuration. Values stay strings until a typed getter
// parses them; parse failures name the offending key. The canonical form
// (sorted key=value lines) feeds the config hash that every artifact embeds.
class Config {
 public:
  Config() = default;

  // '#' starts a comment, blank lines are skipped, first '=' splits key from
  // value, both sides trimmed. A duplicate key keeps the last value and logs
  // a warning.
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  // Throws ConfigError naming the first key not in `known`.
  void check_known(const std::set<std::string>& known) const;

  std::string canonical() const;
  std::string hash_hex() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace nirstext
