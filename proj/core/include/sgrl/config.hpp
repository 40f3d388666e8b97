#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgrl/common.hpp"

namespace sgrl::cfg {

// Flat key/value configuration. Files hold one `key = value` pair per line
// with '#' comments; later assignments win, so CLI overrides are just
// assignments applied after the file.
class Config {
 public:
  static Config from_file(const std::filesystem::path& path);
  void apply_file(const std::filesystem::path& path);
  void apply_override(const std::string& assignment);  // "key=value"

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_num(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  // Unknown keys are almost always typos; callers pass the full set of keys
  // they understand and anything else is a field-level error.
  void reject_unknown(const std::vector<std::string>& known) const;

  // Fully resolved `key = value` lines, sorted by key.
  std::string snapshot() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  double parse_num(const std::string& key) const;
  std::map<std::string, std::string> kv_;
};

}  // namespace sgrl::cfg
