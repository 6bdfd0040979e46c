#pragma once

#include <complex>
#include <span>
#include <vector>

namespace pdecon {

/// Coefficients in ascending order: c[0] + c[1] z + ... + c[n] z^n.
using ComplexPolynomial = std::vector<std::complex<double>>;

std::complex<double> evaluate(std::span<const std::complex<double>> coeffs, std::complex<double> z);

/// 1 + max_j |c_j / c_n| for j < n.
double cauchy_bound(std::span<const std::complex<double>> coeffs);

struct RootOptions {
  int max_iterations = 200;
  /// Relative size of the Aberth correction at which a root counts as settled.
  double step_tolerance = 1e-15;
  /// |p(r)| <= residual_tolerance * max|c| * (1 + |r|)^n is required of every root.
  double residual_tolerance = 1e-10;
};

struct RootReport {
  std::vector<std::complex<double>> roots;
  int iterations = 0;
  bool used_companion_fallback = false;
};

/// All roots of a polynomial of degree >= 1 with multiplicity. Aberth-Ehrlich
/// iteration started on a circle of Cauchy-bound radius; falls back to the
/// eigenvalues of the companion matrix if the iteration does not settle or a
/// residual check fails. Each root gets one Newton refinement that is kept only
/// if it lowers the residual. Throws NumericalError if both methods fail.
RootReport find_roots(std::span<const std::complex<double>> coeffs, const RootOptions& options = {});

inline std::vector<std::complex<double>> complex_roots(std::span<const std::complex<double>> coeffs) {
  return find_roots(coeffs).roots;
}

/// Monic polynomial prod_i (z - r_i).
ComplexPolynomial from_roots(std::span<const std::complex<double>> roots);

}  // namespace pdecon
