#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace postfault {

/// Flat "section.key" -> value settings. Starts from the built-in defaults;
/// INI files and flag overrides may only set keys that already exist.
class RunConfig {
 public:
  static RunConfig defaults();
  /// Defaults overlaid with an INI text (sections become key prefixes).
  static RunConfig from_ini(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  void merge_ini(const std::string& text);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  nlohmann::json to_json() const;
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace postfault
