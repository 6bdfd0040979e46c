#pragma once

#include <cstdint>

namespace pdecon {

/// Counter-based generator: draw n of stream `key` is a fixed bijective mix of
/// (key, n), so results do not depend on platform or scheduling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(mix(key)) {}

  std::uint64_t next_u64() { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }
  /// Uniform on (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream key for (seed, a, b), e.g. (master seed, cell, replicate).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Poisson variate: inversion for mean < 10, transformed rejection (PTRS)
/// otherwise.
std::uint64_t sample_poisson(CounterRng& rng, double mean);

}  // namespace pdecon
