#include "pdecon/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pdecon/errors.hpp"
#include "pdecon/kernels.hpp"
#include "pdecon/mm.hpp"
#include "pdecon/observation.hpp"
#include "pdecon/parallel.hpp"
#include "pdecon/rng.hpp"

namespace pdecon {

namespace {

constexpr std::uint64_t kFallbackStream = 0xFA11BAC4;

std::string num(double v) {
  if (v == kInfinity) return "inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void mean_and_stderr(const std::vector<double>& v, double& mean, double& se) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      sum += x;
      ++n;
    }
  if (n == 0) {
    mean = std::numeric_limits<double>::quiet_NaN();
    se = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v)
    if (!std::isnan(x)) ss += (x - mean) * (x - mean);
  se = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
}

AtomicUniformMeasure window_center(int dim, int k) {
  return AtomicUniformMeasure(dim, std::vector<Point>(static_cast<std::size_t>(k), Point{0.5, dim == 2 ? 0.5 : 0.0}));
}

AtomicUniformMeasure run_estimator(const std::string& name, const CountImage& image, const Kernel& kernel, int k,
                                   const EmConfig& em, std::uint64_t seed) {
  const int dim = image.grid().dimension();
  if (name == "mm-complex") return mm_complex(image, kernel, k).measure;
  if (name == "mm-real") return mm_real(image, kernel, k).measure;
  if (name == "mm-general") {
    MmGeneralOptions o;
    o.seed = seed;
    return mm_general(image, kernel, k, o).measure;
  }
  if (name == "em") {
    AtomicUniformMeasure init = window_center(dim, k);
    try {
      init = dim == 2 ? mm_complex(image, kernel, k).measure : mm_real(image, kernel, k).measure;
    } catch (const NumericalError&) {
      // EM needs distinct starting atoms.
      const Box unit = dim == 2 ? Box{0.0, 1.0, 0.0, 1.0} : Box{0.0, 1.0, 0.0, 0.0};
      init = uniform_random_init(unit, dim, k, derive_seed(seed, kFallbackStream));
    }
    return run_em(image, kernel, init, em).measure;
  }
  throw UsageError("unknown estimator '" + name + "'");
}

struct CellKey {
  double sigma;
  int m;
  double t;
};

}  // namespace

AtomicUniformMeasure builtin_configuration(const std::string& name, int k) {
  if (k < 1) throw UsageError("configuration: k must be >= 1");
  std::vector<Point> pts;
  if (name == "grid") {
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k))));
    if (n * n != k) throw UsageError("configuration grid: k must be a perfect square");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double x = n == 1 ? 0.5 : 0.2 + 0.6 * i / (n - 1);
        const double y = n == 1 ? 0.5 : 0.2 + 0.6 * j / (n - 1);
        pts.push_back({x, y});
      }
  } else if (name == "corners") {
    if (k % 4 != 0) throw UsageError("configuration corners: k must be a multiple of 4");
    const int per = k / 4;
    for (double cx : {0.2, 0.8})
      for (double cy : {0.2, 0.8})
        for (int j = 0; j < per; ++j) {
          if (per == 1) {
            pts.push_back({cx, cy});
          } else {
            const double a = 2.0 * std::numbers::pi * j / per;
            pts.push_back({cx + 0.05 * std::cos(a), cy + 0.05 * std::sin(a)});
          }
        }
  } else if (name == "u-shape") {
    const double len = 1.8;
    for (int j = 0; j < k; ++j) {
      double s = k == 1 ? 0.9 : len * j / (k - 1);
      if (s <= 0.6) {
        pts.push_back({0.2, 0.8 - s});
      } else if (s <= 1.2) {
        pts.push_back({0.2 + (s - 0.6), 0.2});
      } else {
        pts.push_back({0.8, 0.2 + (s - 1.2)});
      }
    }
  } else {
    throw UsageError("unknown configuration '" + name + "'");
  }
  return AtomicUniformMeasure(2, std::move(pts));
}

AtomicUniformMeasure ExperimentSpec::truth() const {
  if (configuration == "custom") {
    if (!custom) throw UsageError("experiment: configuration 'custom' needs atoms");
    return *custom;
  }
  return builtin_configuration(configuration, k);
}

void ExperimentSpec::validate() const {
  if (replicates < 1) throw UsageError("experiment: replicates must be >= 1");
  if (sigmas.empty() || resolutions.empty() || t_values.empty() || estimators.empty()) {
    throw UsageError("experiment: sigma, m, t and estimators must be non-empty");
  }
  for (double s : sigmas)
    if (!(s > 0.0) || !std::isfinite(s)) throw UsageError("experiment: sigma must be positive");
  for (int m : resolutions)
    if (m < 1) throw UsageError("experiment: m must be >= 1");
  for (double t : t_values)
    if (!(t > 0.0)) throw UsageError("experiment: t values must be positive or inf");
  for (const auto& e : estimators)
    if (e != "mm-complex" && e != "mm-real" && e != "mm-general" && e != "em") {
      throw UsageError("experiment: unknown estimator '" + e + "'");
    }
  const AtomicUniformMeasure mu = truth();
  if (static_cast<int>(mu.size()) != k) throw UsageError("experiment: k does not match the configuration");
  if (mu.dimension() == 2 && std::find(estimators.begin(), estimators.end(), "mm-real") != estimators.end()) {
    throw UsageError("experiment: mm-real needs a configuration on the line");
  }
}

const RiskRow& RiskTable::row(const std::string& estimator, double t, int m, double sigma) const {
  for (const auto& r : rows)
    if (r.estimator == estimator && r.t == t && r.m == m && r.sigma == sigma) return r;
  throw UsageError("risk table has no row for " + estimator + " t=" + num(t) + " m=" + std::to_string(m) +
                   " sigma=" + num(sigma));
}

std::string RiskTable::to_csv() const {
  std::ostringstream out;
  out << "estimator,t,m,sigma,replicates,failures,mean_w1,stderr_w1,pessimistic_mean_w1,pessimistic_stderr_w1\n";
  for (const auto& r : rows) {
    out << r.estimator << ',' << num(r.t) << ',' << r.m << ',' << num(r.sigma) << ',' << r.errors.size() << ','
        << r.failures << ',' << num(r.mean_w1) << ',' << num(r.stderr_w1) << ',' << num(r.pessimistic_mean_w1) << ','
        << num(r.pessimistic_stderr_w1) << '\n';
  }
  return out.str();
}

std::string RiskTable::runtime_csv() const {
  std::ostringstream out;
  out << "estimator,t,m,sigma,mean_seconds\n";
  for (const auto& r : rows)
    out << r.estimator << ',' << num(r.t) << ',' << r.m << ',' << num(r.sigma) << ',' << num(r.mean_seconds) << '\n';
  return out.str();
}

nlohmann::json RiskTable::summary() const {
  nlohmann::json j;
  j["spec"] = spec;
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"estimator", r.estimator},
                  {"t", num(r.t)},
                  {"m", r.m},
                  {"sigma", r.sigma},
                  {"failures", r.failures},
                  {"mean_w1", r.mean_w1},
                  {"stderr_w1", r.stderr_w1},
                  {"pessimistic_mean_w1", r.pessimistic_mean_w1},
                  {"pessimistic_stderr_w1", r.pessimistic_stderr_w1}});
  }
  j["rows"] = std::move(rs);
  // Slopes of the finite-t risk curves, one per (estimator, m, sigma).
  nlohmann::json slopes = nlohmann::json::array();
  for (const auto& e : spec.estimators)
    for (int m : spec.resolutions)
      for (double s : spec.sigmas) {
        std::vector<double> ts, ws;
        for (double t : spec.t_values) {
          if (t == kInfinity) continue;
          const RiskRow& r = row(e, t, m, s);
          if (r.mean_w1 > 0.0) {
            ts.push_back(t);
            ws.push_back(r.mean_w1);
          }
        }
        if (ts.size() >= 2) slopes.push_back({{"estimator", e}, {"m", m}, {"sigma", s}, {"slope", loglog_slope(ts, ws)}});
      }
  j["loglog_slopes"] = std::move(slopes);
  return j;
}

RiskTable run_risk_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const AtomicUniformMeasure truth = spec.truth();
  const int dim = truth.dimension();
  const Box window = dim == 2 ? Box{0.0, 1.0, 0.0, 1.0} : Box{0.0, 1.0, 0.0, 0.0};

  std::vector<CellKey> cells;
  for (double s : spec.sigmas)
    for (int m : spec.resolutions)
      for (double t : spec.t_values) cells.push_back({s, m, t});

  const std::size_t n_est = spec.estimators.size();
  const std::size_t n_rep = static_cast<std::size_t>(spec.replicates);
  const std::size_t slots = cells.size() * n_est * n_rep;
  std::vector<double> err(slots, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> secs(slots, 0.0);
  auto slot = [&](std::size_t c, std::size_t e, std::size_t r) { return (c * n_est + e) * n_rep + r; };

  parallel_for(cells.size() * n_rep, spec.jobs, [&](std::size_t work) {
    const std::size_t c = work / n_rep;
    const std::size_t r = work % n_rep;
    const CellKey& key = cells[c];
    const Kernel kernel = Kernel::isotropic_gaussian(dim, key.sigma);
    const BinGrid grid = dim == 2 ? BinGrid::square(window, key.m) : BinGrid::line(0.0, 1.0, key.m);
    const std::uint64_t seed = derive_seed(spec.seed, c, r);
    const CountImage image =
        key.t == kInfinity ? noiseless(kernel, truth, grid) : simulate(kernel, truth, grid, key.t, seed);
    for (std::size_t e = 0; e < n_est; ++e) {
      const auto start = std::chrono::steady_clock::now();
      try {
        const AtomicUniformMeasure est = run_estimator(spec.estimators[e], image, kernel, spec.k, spec.em, seed);
        err[slot(c, e, r)] = wasserstein(est, truth, 1.0);
      } catch (const UsageError&) {
        throw;
      } catch (const std::exception& ex) {
        spdlog::debug("{} failed (cell {}, replicate {}): {}", spec.estimators[e], c, r, ex.what());
      }
      secs[slot(c, e, r)] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  });

  RiskTable table{spec, {}};
  const AtomicUniformMeasure fallback = window_center(dim, spec.k);
  const double fallback_error = wasserstein(fallback, truth, 1.0);
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t e = 0; e < n_est; ++e) {
      RiskRow row;
      row.estimator = spec.estimators[e];
      row.sigma = cells[c].sigma;
      row.m = cells[c].m;
      row.t = cells[c].t;
      double time_sum = 0.0;
      for (std::size_t r = 0; r < n_rep; ++r) {
        const double v = err[slot(c, e, r)];
        row.errors.push_back(v);
        row.pessimistic_errors.push_back(std::isnan(v) ? fallback_error : v);
        row.seconds.push_back(secs[slot(c, e, r)]);
        time_sum += secs[slot(c, e, r)];
        if (std::isnan(v)) ++row.failures;
      }
      mean_and_stderr(row.errors, row.mean_w1, row.stderr_w1);
      mean_and_stderr(row.pessimistic_errors, row.pessimistic_mean_w1, row.pessimistic_stderr_w1);
      row.mean_seconds = time_sum / static_cast<double>(n_rep);
      table.rows.push_back(std::move(row));
    }
  return table;
}

RiskTable run_runtime_comparison(const ExperimentSpec& spec) {
  RiskTable table = run_risk_experiment(spec);
  for (const auto& r : table.rows) {
    if (r.estimator != "em") continue;
    for (const auto& other : table.rows) {
      if (other.estimator == "em" || other.t != r.t || other.m != r.m || other.sigma != r.sigma) continue;
      const bool faster = other.mean_seconds < r.mean_seconds;
      spdlog::info("runtime t={} m={} sigma={}: {} {:.3g}s vs em {:.3g}s{}", num(r.t), r.m, r.sigma, other.estimator,
                   other.mean_seconds, r.mean_seconds, faster ? "" : " (not faster)");
    }
  }
  return table;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("loglog_slope: need at least two paired points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw UsageError("loglog_slope: x values must not all coincide");
  return sxy / sxx;
}

void write_risk_outputs(const RiskTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "risk.csv") << table.to_csv();
  std::ofstream(dir / "risk_summary.json") << table.summary().dump(2) << '\n';
  std::ofstream(dir / "runtime.csv") << table.runtime_csv();
  const ExperimentSpec& spec = table.spec;
  for (const auto& e : spec.estimators)
    for (int m : spec.resolutions)
      for (double s : spec.sigmas) {
        std::ofstream dat(dir / ("risk_" + e + "_m" + std::to_string(m) + "_sigma" + num(s) + ".dat"));
        dat << "# t mean_w1 stderr_w1\n";
        for (double t : spec.t_values) {
          if (t == kInfinity) continue;
          const RiskRow& r = table.row(e, t, m, s);
          dat << num(t) << ' ' << num(r.mean_w1) << ' ' << num(r.stderr_w1) << '\n';
        }
      }
}

void to_json(nlohmann::json& j, const ExperimentSpec& spec) {
  nlohmann::json ts = nlohmann::json::array();
  for (double t : spec.t_values) {
    if (t == kInfinity) {
      ts.push_back("inf");
    } else {
      ts.push_back(t);
    }
  }
  j = {{"configuration", spec.configuration},
       {"k", spec.k},
       {"sigma", spec.sigmas},
       {"m", spec.resolutions},
       {"t", ts},
       {"replicates", spec.replicates},
       {"seed", spec.seed},
       {"estimators", spec.estimators},
       {"em_max_iterations", spec.em.max_iterations}};
  if (spec.custom) j["measure"] = *spec.custom;
}

namespace {

template <typename T>
std::vector<T> scalar_or_list(const nlohmann::json& v, const char* field) {
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const nlohmann::json::exception&) {
    throw UsageError(std::string("experiment: field '") + field + "' has the wrong type");
  }
}

double parse_t(const nlohmann::json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kInfinity;
    throw UsageError("experiment: t must be a number or \"inf\"");
  }
  if (!v.is_number()) throw UsageError("experiment: t must be a number or \"inf\"");
  return v.get<double>();
}

}  // namespace

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("experiment: config must be a JSON object");
  if (!j.contains("configuration")) throw UsageError("experiment: missing field 'configuration'");
  if (!j.contains("k")) throw UsageError("experiment: missing field 'k'");
  ExperimentSpec s;
  try {
    s.configuration = j.at("configuration").get<std::string>();
    s.k = j.at("k").get<int>();
    if (j.contains("sigma")) s.sigmas = scalar_or_list<double>(j["sigma"], "sigma");
    if (j.contains("m")) s.resolutions = scalar_or_list<int>(j["m"], "m");
    if (j.contains("t")) {
      s.t_values.clear();
      if (j["t"].is_array()) {
        for (const auto& v : j["t"]) s.t_values.push_back(parse_t(v));
      } else {
        s.t_values.push_back(parse_t(j["t"]));
      }
    }
    if (j.contains("replicates")) s.replicates = j["replicates"].get<int>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("estimators")) s.estimators = scalar_or_list<std::string>(j["estimators"], "estimators");
    if (j.contains("em_max_iterations")) s.em.max_iterations = j["em_max_iterations"].get<int>();
    if (j.contains("measure")) s.custom = measure_from_json(j["measure"]);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("experiment: malformed config: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace pdecon
