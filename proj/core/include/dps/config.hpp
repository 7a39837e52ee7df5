#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dps {

/// Flat `key = value` configuration; '#' starts a comment. Lookups record which keys
/// were consumed so callers can reject unknown ones.
class KeyValues {
 public:
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_real(const std::string& key) const;
  double get_real(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  std::vector<std::size_t> get_uint_list(const std::string& key, std::vector<std::size_t> fallback) const;

  /// Inserts or overwrites.
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
  std::vector<std::string> unused_keys() const;

  std::string to_text() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);

}  // namespace dps
