#pragma once

#include <cstdint>
#include <string_view>

namespace vinlab {

// Portable 64-bit generator (splitmix64). Every stochastic component in the
// library draws from one of these so that seeds reproduce across platforms.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    return mix(z);
  }

  // Uniform integer in [0, bound). Lemire-style rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t bound);

  // Uniform integer in [lo, hi] inclusive.
  int range(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t state() const { return state_; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a over the tag bytes.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Stream seed for a (master seed, purpose tag) pair. All sub-experiments
// derive their generators through this so each is independently reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  return SplitMix64::mix(SplitMix64::mix(master + 0x9E3779B97F4A7C15ULL) ^ hash_tag(tag));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return SplitMix64::mix(SplitMix64::mix(master + 0x9E3779B97F4A7C15ULL) ^
                         SplitMix64::mix(index ^ 0xD1B54A32D192ED03ULL));
}

}  // namespace vinlab
