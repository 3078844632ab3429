#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maskroute {

/// Flat key=value text with [section] headers. Keys inside a section are
/// stored as "section.key". '#' and ';' start comment lines.
class Config {
 public:
  static Config parse(std::string_view text);
  /// Throws ConfigError if the file cannot be read or parsed.
  static Config load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  void set(std::string key, std::string value);

  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;

  /// Keys under `section`, without the prefix.
  std::vector<std::string> keys_in(std::string_view section) const;
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

  /// Canonical text: top-level keys first, then sections in key order.
  std::string to_text() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);

/// Comma-separated list, empty items dropped.
std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace maskroute
