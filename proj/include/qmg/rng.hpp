#pragma once

#include <cstdint>
#include <string_view>

namespace qmg {

// 64-bit finalizer (SplitMix64). Bijective, well-mixed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Counter-based generator: each draw is a pure function of (key, counter),
/// with the key derived from the run seed and a stream name. Named streams
/// are independent, so adding a stream never perturbs the others, and
/// results do not depend on evaluation order across streams.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view name)
      : key_(mix64(seed ^ mix64(fnv1a64(name)))) {}

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ull;
    return mix64(key_ ^ counter_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Single fair bit.
  std::uint8_t next_bit() { return static_cast<std::uint8_t>(next_u64() >> 63); }

  bool bernoulli(double p) { return next_double() < p; }

  /// Uniform in [0, bound). Modulo bias is negligible for bound << 2^64.
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace qmg
