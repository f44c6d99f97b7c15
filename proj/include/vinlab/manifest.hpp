#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vinlab {

// Line-based `key = value` file. Blank lines and lines starting with '#' are
// ignored; keys are unique and keep their insertion order.
class Manifest {
 public:
  static Manifest parse(const std::string& text);
  static Manifest load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  // Typed lookups; throw std::invalid_argument naming the key on bad values.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_long(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace vinlab
