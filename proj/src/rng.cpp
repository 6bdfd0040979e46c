#include "pdecon/rng.hpp"

#include <cmath>

namespace pdecon {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = CounterRng::mix(seed ^ 0x6A09E667F3BCC909ULL);
  h = CounterRng::mix(h ^ (a + 0x3C6EF372FE94F82BULL));
  return CounterRng::mix(h ^ (b + 0xA54FF53A5F1D36F1ULL));
}

namespace {

std::uint64_t poisson_inversion(CounterRng& rng, double mean) {
  const double limit = std::exp(-mean);
  double product = rng.uniform();
  std::uint64_t k = 0;
  while (product > limit) {
    product *= rng.uniform();
    ++k;
  }
  return k;
}

// Hormann's transformed rejection with squeeze.
std::uint64_t poisson_ptrs(CounterRng& rng, double mean) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <= -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace

std::uint64_t sample_poisson(CounterRng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return mean < 10.0 ? poisson_inversion(rng, mean) : poisson_ptrs(rng, mean);
}

}  // namespace pdecon
