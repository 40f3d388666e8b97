#include "sgrl/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace sgrl::cfg {

namespace {
std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
  Config c;
  c.apply_file(path);
  return c;
}

void Config::apply_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail_arg("config: cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail_arg("config: " + path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      fail_arg("config: " + path.string() + ":" + std::to_string(lineno) + ": empty key");
    kv_[key] = value;
  }
}

void Config::apply_override(const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  check_arg(eq != std::string::npos && eq > 0,
            "config: override '" + assignment + "' is not key=value");
  kv_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) fail_arg("config: missing required key '" + key + "'");
  return it->second;
}

double Config::parse_num(const std::string& key) const {
  const std::string& raw = kv_.at(key);
  try {
    std::size_t used = 0;
    double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    fail_arg("config: " + key + ": cannot parse '" + raw + "' as a number");
  }
}

double Config::get_num(const std::string& key, double fallback) const {
  return has(key) ? parse_num(key) : fallback;
}

long Config::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  double v = parse_num(key);
  long i = static_cast<long>(v);
  if (static_cast<double>(i) != v)
    fail_arg("config: " + key + ": '" + kv_.at(key) + "' is not an integer");
  return i;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = kv_.at(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail_arg("config: " + key + ": cannot parse '" + kv_.at(key) + "' as a bool");
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(kv_.at(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) fail_arg("config: " + key + ": empty list");
  return out;
}

void Config::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : kv_) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      fail_arg("config: unknown key '" + k + "'");
  }
}

std::string Config::snapshot() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace sgrl::cfg
