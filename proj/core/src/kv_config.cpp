#include "xeroalign/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "xeroalign/errors.hpp"

namespace xeroalign {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

KvConfig KvConfig::parse(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.entries_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(cfg.entries_[key].line) + ")");
    }
    cfg.entries_[key] = {trim(line.substr(eq + 1)), lineno};
    cfg.order_.push_back(key);
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const KvConfig::Entry& KvConfig::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  used_.insert(key);
  return it->second;
}

std::string KvConfig::where(const std::string& key) const {
  return origin_ + ":" + std::to_string(entries_.at(key).line) + ": key '" + key + "'";
}

std::string KvConfig::get_string(const std::string& key) const { return entry(key).value; }

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

std::int64_t KvConfig::get_int(const std::string& key) const {
  const auto& v = entry(key).value;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(where(key) + ": '" + v + "' is not an integer");
  return out;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const {
  const auto& v = entry(key).value;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(where(key) + ": '" + v + "' is not a number");
  return out;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = entry(key).value;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(where(key) + ": '" + v + "' is not a boolean");
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const { return split_list(entry(key).value); }

std::vector<std::string> KvConfig::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  return has(key) ? get_list(key) : fallback;
}

std::vector<std::string> KvConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& k : order_)
    if (k.rfind(prefix, 0) == 0) out.push_back(k.substr(prefix.size()));
  return out;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (!entries_.count(key)) order_.push_back(key);
  entries_[key].value = value;
}

void KvConfig::require_all_used() const {
  std::string unknown;
  for (const auto& k : order_) {
    if (used_.count(k)) continue;
    unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

std::string KvConfig::dump() const {
  std::string out;
  for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
  return out;
}

}  // namespace xeroalign
