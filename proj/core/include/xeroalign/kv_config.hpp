#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace xeroalign {

/// `key = value` text: one entry per line, `#` starts a comment, blank lines
/// ignored, keys unique. List values are comma separated.
///
/// Every getter marks its key as used; `require_all_used()` then rejects
/// typos by naming the leftover keys.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::string origin() const { return origin_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  // Keys sharing `prefix`, in file order, with the prefix removed.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  void set(const std::string& key, const std::string& value);

  void require_all_used() const;
  // Canonical `key = value` text, keys sorted.
  std::string dump() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry& entry(const std::string& key) const;
  std::string where(const std::string& key) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  mutable std::set<std::string> used_;
};

std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& s, char sep = ',');

}  // namespace xeroalign
