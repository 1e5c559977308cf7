#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ecohmpc {

/// Minimal TOML-style key/value configuration:
///
///   # comment
///   include = "bus.toml"        (top level only, resolved relative to the file)
///   [section]
///   key = 1.5
///   name = "text"
///   list = [1, 2, 3]
///
/// Keys are addressed as "section.key". Later assignments override earlier
/// ones, so a scenario file can include a base vehicle file and patch it.
class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text, const std::filesystem::path& base_dir,
                      const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  int integer(const std::string& key) const;
  int integer_or(const std::string& key, int fallback) const;
  bool boolean_or(const std::string& key, bool fallback) const;
  std::string string(const std::string& key) const;
  std::string string_or(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  /// A string value interpreted as a path relative to the file that defined it.
  std::filesystem::path path(const std::string& key) const;

  void set(const std::string& key, const std::string& raw_value);
  std::vector<std::string> keys() const;
  /// Files that contributed to this configuration, in load order.
  const std::vector<std::filesystem::path>& sources() const { return sources_; }

 private:
  struct Entry {
    std::string raw;
    std::filesystem::path base_dir;
    std::string origin;
  };
  void parse_into(const std::string& text, const std::filesystem::path& base_dir,
                  const std::string& origin, int depth);
  const Entry& entry(const std::string& key) const;

  std::map<std::string, Entry> values_;
  std::vector<std::filesystem::path> sources_;
};

}  // namespace ecohmpc
