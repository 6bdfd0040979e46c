#include "pdecon/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "pdecon/errors.hpp"

namespace pdecon {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

}  // namespace

MinimizeResult minimize_box(const Objective& f, std::vector<double> x0, std::span<const double> lower,
                            std::span<const double> upper, const MinimizeOptions& options) {
  const std::size_t n = x0.size();
  if (lower.size() != n || upper.size() != n) throw UsageError("minimize_box: bounds must match the variable count");
  auto project = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  };

  MinimizeResult result;
  std::vector<double> x = std::move(x0);
  project(x);
  std::vector<double> g(n), gn(n), d(n), xn(n), q(n);
  double fx = f(x, g);
  ++result.evaluations;
  if (!std::isfinite(fx)) {
    result.x = x;
    result.value = fx;
    result.status = "non-finite objective at start";
    return result;
  }

  std::deque<CurvaturePair> memory;
  std::vector<char> free_var(n);
  for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
    double pg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      free_var[i] = !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0));
      pg = std::max(pg, std::abs(std::clamp(x[i] - g[i], lower[i], upper[i]) - x[i]));
    }
    if (pg <= options.gradient_tolerance) {
      result.converged = true;
      result.status = "projected gradient below tolerance";
      break;
    }

    for (std::size_t i = 0; i < n; ++i) q[i] = free_var[i] ? g[i] : 0.0;
    bool steepest = memory.empty();
    if (!steepest) {
      std::vector<double> alpha(memory.size());
      for (std::size_t m = memory.size(); m-- > 0;) {
        alpha[m] = memory[m].rho * dot(memory[m].s, q);
        for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[m] * memory[m].y[i];
      }
      const auto& last = memory.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : q) v *= gamma;
      for (std::size_t m = 0; m < memory.size(); ++m) {
        const double beta = memory[m].rho * dot(memory[m].y, q);
        for (std::size_t i = 0; i < n; ++i) q[i] += memory[m].s[i] * (alpha[m] - beta);
      }
      for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? -q[i] : 0.0;
      if (dot(d, g) >= 0.0) {
        steepest = true;
        memory.clear();
      }
    }
    if (steepest) {
      double gmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, free_var[i] ? std::abs(g[i]) : 0.0);
      if (gmax == 0.0) {
        result.converged = true;
        result.status = "zero gradient on free variables";
        break;
      }
      const double scale = options.initial_step / gmax;
      for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? -g[i] * scale : 0.0;
    }

    double step = 1.0;
    double fn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + step * d[i];
      project(xn);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (xn[i] - x[i]);
      fn = f(xn, gn);
      ++result.evaluations;
      if (std::isfinite(fn) && fn < fx && fn <= fx + 1e-4 * std::min(decrease, 0.0)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;
      result.status = "no decrease along the search direction";
      break;
    }

    CurvaturePair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = xn[i] - x[i];
      pair.y[i] = gn[i] - g[i];
    }
    const double sy = dot(pair.s, pair.y);
    if (sy > 1e-12 * std::sqrt(dot(pair.s, pair.s) * dot(pair.y, pair.y))) {
      pair.rho = 1.0 / sy;
      memory.push_back(std::move(pair));
      if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
    }

    const double change = fx - fn;
    x.swap(xn);
    g.swap(gn);
    fx = fn;
    if (change <= options.relative_tolerance * std::max({std::abs(fx), std::abs(fx + change), 1e-300})) {
      result.converged = true;
      result.status = "relative decrease below tolerance";
      ++result.iterations;
      break;
    }
  }
  if (result.status.empty()) result.status = "iteration limit";
  result.x = std::move(x);
  result.value = fx;
  return result;
}

}  // namespace pdecon
