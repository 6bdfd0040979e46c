#include "pdecon/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "pdecon/errors.hpp"

namespace pdecon {

namespace {

using cplx = std::complex<double>;

// Horner evaluation of p and p'.
std::pair<cplx, cplx> evaluate_with_derivative(std::span<const cplx> c, cplx z) {
  cplx p = c.back();
  cplx dp = 0.0;
  for (std::size_t i = c.size() - 1; i-- > 0;) {
    dp = dp * z + p;
    p = p * z + c[i];
  }
  return {p, dp};
}

double max_abs_coefficient(std::span<const cplx> c) {
  double m = 0.0;
  for (const cplx& v : c) m = std::max(m, std::abs(v));
  return m;
}

bool residuals_acceptable(std::span<const cplx> c, std::span<const cplx> roots, double tol) {
  const double scale = max_abs_coefficient(c);
  const double degree = static_cast<double>(c.size() - 1);
  for (const cplx& r : roots) {
    if (!std::isfinite(r.real()) || !std::isfinite(r.imag())) return false;
    const double bound = tol * scale * std::pow(1.0 + std::abs(r), degree);
    if (std::abs(evaluate(c, r)) > bound) return false;
  }
  return true;
}

void newton_polish(std::span<const cplx> c, std::vector<cplx>& roots) {
  for (cplx& r : roots) {
    const auto [p, dp] = evaluate_with_derivative(c, r);
    if (dp == cplx(0.0)) continue;
    const cplx candidate = r - p / dp;
    if (std::abs(evaluate(c, candidate)) < std::abs(p)) r = candidate;
  }
}

bool aberth(std::span<const cplx> c, const RootOptions& options, std::vector<cplx>& z, int& iterations) {
  const std::size_t n = c.size() - 1;
  const double radius = cauchy_bound(c);
  z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n) + 0.4;
    z[i] = std::polar(radius, angle);
  }

  for (iterations = 1; iterations <= options.max_iterations; ++iterations) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [p, dp] = evaluate_with_derivative(c, z[i]);
      if (p == cplx(0.0)) continue;
      const cplx ratio = p / dp;
      cplx repulsion = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) repulsion += 1.0 / (z[i] - z[j]);
      }
      cplx step = ratio / (1.0 - ratio * repulsion);
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) step = ratio;
      z[i] -= step;
      worst = std::max(worst, std::abs(step) / (1.0 + std::abs(z[i])));
    }
    if (worst <= options.step_tolerance) return true;
  }
  return false;
}

std::vector<cplx> companion_eigenvalues(std::span<const cplx> c) {
  const auto n = static_cast<Eigen::Index>(c.size() - 1);
  Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) companion(i, n - 1) = -c[static_cast<std::size_t>(i)] / c.back();
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(companion, false);
  if (solver.info() != Eigen::Success) return {};
  std::vector<cplx> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = solver.eigenvalues()[i];
  return out;
}

}  // namespace

std::complex<double> evaluate(std::span<const std::complex<double>> coeffs, std::complex<double> z) {
  cplx p = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) p = p * z + coeffs[i];
  return p;
}

double cauchy_bound(std::span<const std::complex<double>> coeffs) {
  const cplx lead = coeffs.back();
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < coeffs.size(); ++i) m = std::max(m, std::abs(coeffs[i] / lead));
  return 1.0 + m;
}

RootReport find_roots(std::span<const std::complex<double>> coeffs, const RootOptions& options) {
  if (coeffs.size() < 2 || coeffs.back() == cplx(0.0)) {
    throw UsageError("find_roots: polynomial must have degree >= 1 with non-zero leading coefficient");
  }
  RootReport report;
  if (coeffs.size() == 2) {
    report.roots = {-coeffs[0] / coeffs[1]};
    return report;
  }

  const bool converged = aberth(coeffs, options, report.roots, report.iterations);
  newton_polish(coeffs, report.roots);
  const bool aberth_ok = residuals_acceptable(coeffs, report.roots, options.residual_tolerance);
  if (converged && aberth_ok) return report;

  std::vector<cplx> fallback = companion_eigenvalues(coeffs);
  if (fallback.size() + 1 == coeffs.size()) {
    newton_polish(coeffs, fallback);
    if (residuals_acceptable(coeffs, fallback, options.residual_tolerance)) {
      report.roots = std::move(fallback);
      report.used_companion_fallback = true;
      return report;
    }
  }
  // Clustered roots can stall the step criterion while the residuals are fine.
  if (aberth_ok) return report;
  throw NumericalError("find_roots: Aberth iteration and companion eigenvalues both failed the residual bound");
}

ComplexPolynomial from_roots(std::span<const std::complex<double>> roots) {
  ComplexPolynomial c{1.0};
  for (const cplx& r : roots) {
    ComplexPolynomial next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i + 1] += c[i];
      next[i] -= r * c[i];
    }
    c = std::move(next);
  }
  return c;
}

}  // namespace pdecon
