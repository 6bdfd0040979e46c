#include <doctest.h>

#include <algorithm>

#include "pdecon/errors.hpp"
#include "pdecon/measures.hpp"
#include "pdecon/polynomial.hpp"
#include "pdecon/rng.hpp"

using namespace pdecon;
using cplx = std::complex<double>;

namespace {

// Worst distance after optimal matching of two root multisets.
double match_error(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  return wasserstein(AtomicUniformMeasure::from_complex(a), AtomicUniformMeasure::from_complex(b), kInfinity);
}

}  // namespace

TEST_CASE("evaluation and cauchy bound") {
  const ComplexPolynomial p{-6.0, 11.0, -6.0, 1.0};
  CHECK(std::abs(evaluate(p, 2.0)) == 0.0);
  CHECK(evaluate(p, 0.0).real() == -6.0);
  CHECK(cauchy_bound(p) == doctest::Approx(12.0));
}

TEST_CASE("roots of factored polynomials") {
  CHECK(match_error(complex_roots(ComplexPolynomial{0.0, -1.0, 1.0}), {0.0, 1.0}) < 1e-14);
  CHECK(match_error(complex_roots(ComplexPolynomial{-6.0, 11.0, -6.0, 1.0}), {1.0, 2.0, 3.0}) < 1e-12);

  std::vector<cplx> tenths;
  for (int j = 1; j <= 5; ++j) tenths.push_back(j / 10.0);
  CHECK(match_error(complex_roots(from_roots(tenths)), tenths) < 1e-8);

  const ComplexPolynomial zk{0.0, 0.0, 0.0, 1.0};
  for (const auto& r : complex_roots(zk)) CHECK(std::abs(r) < 1e-5);

  const std::vector<cplx> mixed{{0.3, 0.4}, {-1.0, 0.0}, {0.0, -2.0}, {0.25, 0.25}};
  CHECK(match_error(complex_roots(from_roots(mixed)), mixed) < 1e-12);
  CHECK_THROWS_AS(complex_roots(ComplexPolynomial{1.0}), UsageError);
}

TEST_CASE("random root sets are recovered and obey the residual and Cauchy bounds") {
  CounterRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 6;
    std::vector<cplx> roots;
    for (int j = 0; j < k; ++j) roots.emplace_back(rng.uniform(), rng.uniform());
    const auto p = from_roots(roots);
    const RootReport rep = find_roots(p);
    CHECK(match_error(rep.roots, roots) < 1e-8);
    double cmax = 0.0;
    for (const auto& c : p) cmax = std::max(cmax, std::abs(c));
    const double bound = cauchy_bound(p);
    for (const auto& r : rep.roots) {
      CHECK(std::abs(evaluate(p, r)) <= 1e-10 * cmax * std::pow(1.0 + std::abs(r), k));
      CHECK(std::abs(r) <= bound);
    }
  }
}

TEST_CASE("companion fallback engages when Aberth is starved") {
  const std::vector<cplx> roots{0.1, 0.5, {0.2, 0.7}};
  RootOptions o;
  o.max_iterations = 1;
  const RootReport rep = find_roots(from_roots(roots), o);
  CHECK(rep.used_companion_fallback);
  CHECK(match_error(rep.roots, roots) < 1e-10);
}
