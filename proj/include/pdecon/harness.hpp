#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdecon/em.hpp"
#include "pdecon/measures.hpp"

namespace pdecon {

/// grid: sqrt(k) x sqrt(k) lattice on [0.2, 0.8]^2. corners: the four points
/// {0.2, 0.8}^2, or for k = 4n, n atoms on a circle of radius 0.05 around
/// each. u-shape: k atoms equally spaced along the path (0.2, 0.8) ->
/// (0.2, 0.2) -> (0.8, 0.2) -> (0.8, 0.8).
AtomicUniformMeasure builtin_configuration(const std::string& name, int k);

struct ExperimentSpec {
  std::string configuration = "grid";
  /// Used when configuration is "custom".
  std::optional<AtomicUniformMeasure> custom;
  int k = 4;
  std::vector<double> sigmas{0.05};
  /// Bins per axis.
  std::vector<int> resolutions{40};
  /// Exposures; kInfinity requests noiseless images.
  std::vector<double> t_values{1e3, 1e4, 1e5, 1e6, 1e7};
  int replicates = 100;
  std::uint64_t seed = 20240101;
  /// Any of "mm-complex", "mm-real", "mm-general", "em".
  std::vector<std::string> estimators{"mm-complex", "em"};
  EmConfig em;
  int jobs = 1;

  AtomicUniformMeasure truth() const;
  void validate() const;
};

struct RiskRow {
  std::string estimator;
  double t = 0.0;
  int m = 0;
  double sigma = 0.0;
  /// W_1 to the truth per replicate, NaN where the estimator failed.
  std::vector<double> errors;
  /// Failures scored against the window-center measure.
  std::vector<double> pessimistic_errors;
  std::vector<double> seconds;
  int failures = 0;
  double mean_w1 = 0.0;
  double stderr_w1 = 0.0;
  double pessimistic_mean_w1 = 0.0;
  double pessimistic_stderr_w1 = 0.0;
  double mean_seconds = 0.0;
};

struct RiskTable {
  ExperimentSpec spec;
  std::vector<RiskRow> rows;

  const RiskRow& row(const std::string& estimator, double t, int m, double sigma) const;
  /// Long format without timings, so reruns are byte-identical.
  std::string to_csv() const;
  std::string runtime_csv() const;
  nlohmann::json summary() const;
};

RiskTable run_risk_experiment(const ExperimentSpec& spec);

/// The same runs; logs, per cell, whether method-of-moments estimators beat
/// EM on mean wall time.
RiskTable run_runtime_comparison(const ExperimentSpec& spec);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// risk.csv, risk_summary.json, runtime.csv and one .dat file per
/// (estimator, m, sigma) with columns "t mean stderr".
void write_risk_outputs(const RiskTable& table, const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const ExperimentSpec& spec);
ExperimentSpec experiment_from_json(const nlohmann::json& j);

}  // namespace pdecon
