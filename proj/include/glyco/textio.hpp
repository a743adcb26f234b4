#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace glyco {

std::vector<std::string> split_csv_line(std::string_view line);
std::string_view trim(std::string_view text);

/// Shortest decimal text that parses back to the identical double.
std::string format_real(double value);
/// Strict parse of a whole cell; throws NonNumericCell with `context`.
double parse_real(std::string_view cell, const std::string& context);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Flat `key = value` text config. `#` starts a comment; blank lines are
/// ignored; later duplicates override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_real(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Canonical serialization: sorted keys, one `key = value` per line.
  std::string to_text() const;
  std::string hash() const { return fnv1a_hex(to_text()); }
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace glyco
