#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pdecon {

/// f(x); writes the gradient into `grad` (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct MinimizeOptions {
  int max_iterations = 200;
  /// Stop when the projected gradient's largest entry falls below this.
  double gradient_tolerance = 1e-10;
  /// Stop when one step changes f by less than this relative amount.
  double relative_tolerance = 1e-15;
  int history = 8;
  /// Largest coordinate change of the first (steepest-descent) step.
  double initial_step = 1.0;
};

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
};

/// Limited-memory quasi-Newton minimization on the box lower <= x <= upper.
/// Directions come from the two-loop recursion restricted to the free
/// variables; steps follow the projected path with Armijo backtracking, and a
/// step is only taken if it strictly decreases f.
MinimizeResult minimize_box(const Objective& f, std::vector<double> x0, std::span<const double> lower,
                            std::span<const double> upper, const MinimizeOptions& options = {});

}  // namespace pdecon
