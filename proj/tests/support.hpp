#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pdecon/measures.hpp"
#include "pdecon/rng.hpp"

namespace testing {

using pdecon::AtomicUniformMeasure;
using pdecon::Point;

inline AtomicUniformMeasure random_measure(pdecon::CounterRng& rng, int dim, int k, double lo = 0.0,
                                           double hi = 1.0) {
  std::vector<Point> pts;
  for (int i = 0; i < k; ++i) {
    const double x = lo + (hi - lo) * rng.uniform();
    const double y = dim == 2 ? lo + (hi - lo) * rng.uniform() : 0.0;
    pts.push_back({x, y});
  }
  return AtomicUniformMeasure(dim, std::move(pts));
}

/// Minimum over all k! permutations; p = infinity gives the bottleneck value.
inline double brute_force_wasserstein(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu, double p) {
  const std::size_t k = mu.size();
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double v = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = pdecon::distance(mu[i], nu[perm[i]]);
      v = std::isinf(p) ? std::max(v, d) : v + std::pow(d, p);
    }
    if (!std::isinf(p)) v = std::pow(v / static_cast<double>(k), 1.0 / p);
    best = std::min(best, v);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Adaptive Gauss-Kronrod on [a, b].
template <typename F>
double integrate(F f, double a, double b, double tol = 1e-12) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol);
}

/// Nested adaptive Gauss-Kronrod on [x0, x1] x [y0, y1].
template <typename F>
double integrate2(F f, double x0, double x1, double y0, double y1, double tol = 1e-11) {
  return integrate([&](double x) { return integrate([&](double y) { return f(x, y); }, y0, y1, tol); }, x0, x1, tol);
}

}  // namespace testing
