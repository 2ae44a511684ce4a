#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "heatcast/common.hpp"

namespace heatcast {

// Line-oriented "key = value" text config. Blank lines and '#' comments are
// skipped; later keys override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig load(const std::filesystem::path& path);
  static KeyValueConfig parse(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace heatcast
