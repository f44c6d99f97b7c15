#include "vinlab/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vinlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("manifest: bad value for " + key + ": " + text);
  return v;
}

}  // namespace

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("manifest line " + std::to_string(n) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("manifest line " + std::to_string(n) + ": empty key");
    if (m.has(key)) throw std::invalid_argument("manifest: duplicate key " + key);
    m.entries_.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return m;
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string Manifest::serialize() const {
  std::string s;
  for (const auto& [k, v] : entries_) s += k + " = " + v + "\n";
  return s;
}

void Manifest::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << serialize();
}

void Manifest::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find('=') != std::string::npos || trim(key) != key) {
    throw std::invalid_argument("manifest: bad key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) throw std::invalid_argument("manifest: value spans lines");
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

bool Manifest::has(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> Manifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Manifest::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

long Manifest::get_long(const std::string& key, long fallback) const {
  const auto v = get(key);
  return v ? parse_number<long>(key, *v) : fallback;
}

std::uint64_t Manifest::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

double Manifest::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

}  // namespace vinlab
