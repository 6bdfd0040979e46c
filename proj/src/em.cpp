#include "pdecon/em.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pdecon/errors.hpp"
#include "pdecon/optimize.hpp"
#include "pdecon/rng.hpp"

namespace pdecon {

namespace {

// Neumaier-compensated running sum; EM monotonicity is checked on sums over
// many bins, so plain accumulation error matters.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      carry_ += (sum_ - t) + v;
    } else {
      carry_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

void require_compatible(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& mu) {
  const int d = image.grid().dimension();
  if (kernel.dimension() != d || mu.dimension() != d) {
    throw UsageError("EM: image, kernel and measure dimensions differ");
  }
}

// Term of Q belonging to one atom, and optionally its gradient.
struct AtomTerm {
  const CountImage& image;
  const Kernel& kernel;
  std::span<const double> weights;  // X_i p_{i,j}
  double inv_k;
  double floor;
  std::vector<double> mass, gx, gy;

  AtomTerm(const CountImage& im, const Kernel& ker, std::span<const double> w, std::size_t k, double fl)
      : image(im), kernel(ker), weights(w), inv_k(1.0 / static_cast<double>(k)), floor(fl),
        mass(im.grid().size()), gx(im.grid().size()), gy(im.grid().size()) {}

  double value(const Point& theta, double* grad_x = nullptr, double* grad_y = nullptr) {
    const bool want_grad = grad_x != nullptr;
    const int d = image.grid().dimension();
    if (want_grad) {
      atom_footprint(kernel, image.grid(), theta, mass, gx, d == 2 ? std::span<double>(gy) : std::span<double>());
    } else {
      atom_footprint(kernel, image.grid(), theta, mass);
    }
    const double t = image.likelihood_exposure();
    CompensatedSum q;
    double dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
      const double lambda = mass[i] * inv_k;
      const double c = weights[i];
      if (c > 0.0) q.add(c * std::log(t * std::max(lambda, floor)));
      q.add(-t * lambda);
      if (want_grad) {
        const double factor = (c > 0.0 && lambda > floor ? c / lambda : 0.0) - t;
        dx += factor * gx[i] * inv_k;
        if (d == 2) dy += factor * gy[i] * inv_k;
      }
    }
    if (want_grad) {
      *grad_x = dx;
      if (grad_y != nullptr) *grad_y = dy;
    }
    return q.value();
  }
};

std::vector<double> component_weights(const CountImage& image, const Responsibilities& resp, std::size_t j) {
  std::vector<double> w(image.grid().size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = image.counts()[i] * resp(i, j);
  return w;
}

void require_resp(const CountImage& image, const Responsibilities& resp, const AtomicUniformMeasure& mu) {
  if (resp.bins() != image.grid().size() || resp.components() != mu.size()) {
    throw UsageError("EM: responsibilities do not match the image and measure");
  }
}

}  // namespace

const char* to_string(StepStatus s) {
  switch (s) {
    case StepStatus::Accepted:
      return "accepted";
    case StepStatus::NoImprovement:
      return "no_improvement";
    case StepStatus::OptimizerFailed:
      return "optimizer_failed";
  }
  return "unknown";
}

bool EmTrace::monotone() const {
  double prev = initial_log_likelihood;
  for (const auto& it : iterations) {
    if (it.status != StepStatus::Accepted) continue;
    if (it.log_likelihood < prev) return false;
    prev = it.log_likelihood;
  }
  return true;
}

std::string EmTrace::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,loglik,w1_step,status\n";
  out << 0 << ',' << initial_log_likelihood << ',' << 0 << ",start\n";
  for (const auto& it : iterations) {
    out << it.iteration << ',' << it.log_likelihood << ',' << it.w1_step << ',' << to_string(it.status) << '\n';
  }
  return out.str();
}

Box default_domain(const BinGrid& grid, const Kernel& kernel) {
  Box b = grid.window().inflated(3.0 * kernel.length_scale());
  if (grid.dimension() == 1) {
    b.y0 = 0.0;
    b.y1 = 0.0;
  }
  return b;
}

double log_likelihood(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& mu,
                      double intensity_floor) {
  require_compatible(image, kernel, mu);
  const auto lambda = intensities(kernel, mu, image.grid());
  const double t = image.likelihood_exposure();
  CompensatedSum sum;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    const double x = image.counts()[i];
    if (x > 0.0) sum.add(x * std::log(t * std::max(lambda[i], intensity_floor)));
    sum.add(-t * lambda[i]);
  }
  return sum.value();
}

Responsibilities e_step(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& mu_tilde) {
  require_compatible(image, kernel, mu_tilde);
  const std::size_t m = image.grid().size();
  const std::size_t k = mu_tilde.size();
  Responsibilities resp(m, k);
  std::vector<double> mass(m);
  for (std::size_t j = 0; j < k; ++j) {
    atom_footprint(kernel, image.grid(), mu_tilde[j], mass);
    for (std::size_t i = 0; i < m; ++i) resp(i, j) = mass[i];
  }
  // The common 1/k factor cancels in the ratio.
  const double uniform = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < m; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += resp(i, j);
    for (std::size_t j = 0; j < k; ++j) resp(i, j) = total > 0.0 ? resp(i, j) / total : uniform;
  }
  return resp;
}

double q_function(const CountImage& image, const Kernel& kernel, const Responsibilities& resp,
                  const AtomicUniformMeasure& mu, double intensity_floor) {
  require_compatible(image, kernel, mu);
  require_resp(image, resp, mu);
  double q = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const auto w = component_weights(image, resp, j);
    AtomTerm term(image, kernel, w, mu.size(), intensity_floor);
    q += term.value(mu[j]);
  }
  return q;
}

std::vector<double> q_gradient(const CountImage& image, const Kernel& kernel, const Responsibilities& resp,
                               const AtomicUniformMeasure& mu, double intensity_floor) {
  require_compatible(image, kernel, mu);
  require_resp(image, resp, mu);
  const int d = image.grid().dimension();
  std::vector<double> grad;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const auto w = component_weights(image, resp, j);
    AtomTerm term(image, kernel, w, mu.size(), intensity_floor);
    double gx = 0.0, gy = 0.0;
    term.value(mu[j], &gx, d == 2 ? &gy : nullptr);
    grad.push_back(gx);
    if (d == 2) grad.push_back(gy);
  }
  return grad;
}

MStepResult m_step(const CountImage& image, const Kernel& kernel, const Responsibilities& resp,
                   const AtomicUniformMeasure& mu_tilde, const EmConfig& config) {
  require_compatible(image, kernel, mu_tilde);
  require_resp(image, resp, mu_tilde);
  const int d = image.grid().dimension();
  const Box theta = config.domain.value_or(default_domain(image.grid(), kernel));
  std::vector<double> lower{theta.x0}, upper{theta.x1};
  if (d == 2) {
    lower.push_back(theta.y0);
    upper.push_back(theta.y1);
  }

  MinimizeOptions mo;
  mo.max_iterations = config.inner.max_iterations;
  mo.gradient_tolerance = config.inner.gradient_tolerance;
  mo.relative_tolerance = config.inner.relative_tolerance;
  mo.initial_step = 0.1 * kernel.length_scale();

  std::vector<Point> atoms(mu_tilde.atoms().begin(), mu_tilde.atoms().end());
  MStepResult out{mu_tilde, 0.0, 0.0, StepStatus::NoImprovement};
  bool failed = false;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const auto w = component_weights(image, resp, j);
    AtomTerm term(image, kernel, w, atoms.size(), config.intensity_floor);
    const double q_old = term.value(atoms[j]);
    out.q_before += q_old;

    const Objective negative_q = [&](std::span<const double> v, std::span<double> g) {
      double gx = 0.0, gy = 0.0;
      const double q = term.value({v[0], d == 2 ? v[1] : 0.0}, &gx, d == 2 ? &gy : nullptr);
      g[0] = -gx;
      if (d == 2) g[1] = -gy;
      return -q;
    };
    std::vector<double> start{std::clamp(atoms[j].x, theta.x0, theta.x1)};
    if (d == 2) start.push_back(std::clamp(atoms[j].y, theta.y0, theta.y1));
    const MinimizeResult r = minimize_box(negative_q, std::move(start), lower, upper, mo);
    if (!std::isfinite(r.value)) {
      failed = true;
      out.q_after += q_old;
      continue;
    }
    const Point candidate{r.x[0], d == 2 ? r.x[1] : 0.0};
    // Re-evaluate rather than trusting the optimizer's bookkeeping.
    const double q_new = term.value(candidate);
    if (q_new > q_old + 1e-13 * (std::abs(q_old) + 1.0)) {
      atoms[j] = candidate;
      out.q_after += q_new;
      out.status = StepStatus::Accepted;
    } else {
      out.q_after += q_old;
    }
  }
  if (out.status == StepStatus::Accepted) {
    out.measure = AtomicUniformMeasure(d, std::move(atoms));
  } else if (failed) {
    out.status = StepStatus::OptimizerFailed;
  }
  return out;
}

AtomicUniformMeasure uniform_random_init(const Box& domain, int dimension, int k, std::uint64_t seed) {
  if (k < 1) throw UsageError("uniform_random_init: k must be >= 1");
  CounterRng rng(seed);
  std::vector<Point> pts;
  for (int j = 0; j < k; ++j) {
    const double x = domain.x0 + rng.uniform() * domain.width();
    const double y = dimension == 2 ? domain.y0 + rng.uniform() * domain.height() : 0.0;
    pts.push_back({x, y});
  }
  return AtomicUniformMeasure(dimension, std::move(pts));
}

EmResult run_em(const CountImage& image, const Kernel& kernel, const AtomicUniformMeasure& init,
                const EmConfig& config) {
  require_compatible(image, kernel, init);
  if (config.max_iterations < 1) throw UsageError("run_em: max_iterations must be >= 1");
  if (!(config.intensity_floor > 0.0)) throw UsageError("run_em: intensity floor must be positive");
  const Box theta = config.domain.value_or(default_domain(image.grid(), kernel));

  EmTrace trace;
  std::vector<Point> start(init.atoms().begin(), init.atoms().end());
  for (Point& p : start) {
    const Point clipped{std::clamp(p.x, theta.x0, theta.x1), std::clamp(p.y, theta.y0, theta.y1)};
    if (!(clipped == p)) trace.init_clipped = true;
    p = clipped;
  }
  AtomicUniformMeasure mu(init.dimension(), std::move(start));
  EmConfig cfg = config;
  cfg.domain = theta;

  trace.initial_log_likelihood = log_likelihood(image, kernel, mu, cfg.intensity_floor);
  double current_ll = trace.initial_log_likelihood;
  for (int l = 1; l <= cfg.max_iterations; ++l) {
    const Responsibilities resp = e_step(image, kernel, mu);
    MStepResult step = m_step(image, kernel, resp, mu, cfg);
    EmIteration rec;
    rec.iteration = l;
    rec.status = step.status;
    if (step.status != StepStatus::Accepted) {
      rec.log_likelihood = current_ll;
      trace.iterations.push_back(rec);
      break;
    }
    rec.w1_step = wasserstein(step.measure, mu, 1.0);
    rec.log_likelihood = log_likelihood(image, kernel, step.measure, cfg.intensity_floor);
    current_ll = rec.log_likelihood;
    trace.iterations.push_back(rec);
    mu = std::move(step.measure);
    if (rec.w1_step < cfg.early_stop_w1) break;
  }

  const double scale = kernel.length_scale();
  for (std::size_t a = 0; a < mu.size(); ++a)
    for (std::size_t b = a + 1; b < mu.size(); ++b)
      if (distance(mu[a], mu[b]) < 1e-9 * scale) trace.collision = true;
  return {std::move(mu), std::move(trace)};
}

}  // namespace pdecon
