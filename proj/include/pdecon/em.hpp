#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdecon/kernels.hpp"
#include "pdecon/measures.hpp"
#include "pdecon/observation.hpp"

namespace pdecon {

struct InnerOptimizerSettings {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  double relative_tolerance = 1e-15;
};

struct EmConfig {
  /// L
  int max_iterations = 50;
  /// Stop once W_1(mu^(l), mu^(l-1)) drops below this.
  double early_stop_w1 = 1e-9;
  InnerOptimizerSettings inner;
  /// Floor on intensities inside logarithms.
  double intensity_floor = 1e-30;
  /// Theta; defaults to the window inflated by 3 kernel length scales.
  std::optional<Box> domain;
};

enum class StepStatus { Accepted, NoImprovement, OptimizerFailed };

const char* to_string(StepStatus s);

struct EmIteration {
  int iteration = 0;
  double log_likelihood = 0.0;
  double w1_step = 0.0;
  StepStatus status = StepStatus::Accepted;
};

struct EmTrace {
  double initial_log_likelihood = 0.0;
  std::vector<EmIteration> iterations;
  /// Two atoms ended up (numerically) on top of each other.
  bool collision = false;
  /// The initializer had atoms outside Theta and was clipped.
  bool init_clipped = false;

  /// True if the log-likelihood never decreased across accepted iterations.
  bool monotone() const;
  /// "iteration,loglik,w1_step,status" rows, iteration 0 being the start.
  std::string to_csv() const;
};

/// Theta used when EmConfig::domain is unset.
Box default_domain(const BinGrid& grid, const Kernel& kernel);

/// sum_i X_i log(t lambda_i) - t lambda_i with lambda_i floored inside the log.
/// Noiseless images use their intensities as counts and t = 1.
double log_likelihood(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& mu,
                      double intensity_floor = 1e-30);

/// p_{i,j} = lambda_{i,j} / sum_h lambda_{i,h}; rows of zero total get 1/k.
class Responsibilities {
 public:
  Responsibilities(std::size_t bins, std::size_t k) : bins_(bins), k_(k), p_(bins * k, 0.0) {}

  std::size_t bins() const { return bins_; }
  std::size_t components() const { return k_; }
  double operator()(std::size_t i, std::size_t j) const { return p_[i * k_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return p_[i * k_ + j]; }

 private:
  std::size_t bins_;
  std::size_t k_;
  std::vector<double> p_;
};

Responsibilities e_step(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& mu_tilde);

/// Q(mu, mu_tilde) = sum_i sum_j X_i p_{i,j} ln(t lambda_{i,j}) - t lambda_{i,j}.
double q_function(const CountImage& image, const Kernel& kernel, const Responsibilities& resp,
                  const AtomicUniformMeasure& mu, double intensity_floor = 1e-30);

/// dQ/d(theta_j) flattened as [x_0, y_0, x_1, y_1, ...] (x only on the line).
std::vector<double> q_gradient(const CountImage& image, const Kernel& kernel, const Responsibilities& resp,
                               const AtomicUniformMeasure& mu, double intensity_floor = 1e-30);

struct MStepResult {
  AtomicUniformMeasure measure;
  double q_before = 0.0;
  double q_after = 0.0;
  StepStatus status = StepStatus::Accepted;
};

/// Maximizes Q over atoms in Theta starting from mu_tilde. Q separates over
/// atoms, so each atom is moved by its own box-constrained quasi-Newton solve
/// and kept only if its term of Q increased.
MStepResult m_step(const CountImage& image, const Kernel& kernel, const Responsibilities& resp,
                   const AtomicUniformMeasure& mu_tilde, const EmConfig& config);

struct EmResult {
  AtomicUniformMeasure measure;
  EmTrace trace;
};

/// k atoms drawn uniformly in `domain`, for ablations against the moment
/// initializer.
AtomicUniformMeasure uniform_random_init(const Box& domain, int dimension, int k, std::uint64_t seed);

EmResult run_em(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& init,
                const EmConfig& config = {});

}  // namespace pdecon
