#include "pdecon/mm.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "pdecon/errors.hpp"
#include "pdecon/optimize.hpp"
#include "pdecon/rng.hpp"

namespace pdecon {

namespace {

using cplx = std::complex<double>;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Weighted monomial sums S_j = sum_i w_i z_i^j, j = 0..order, in the frame.
std::vector<cplx> weighted_power_sums(const CountImage& image, int order, const MomentFrame& frame, bool complex_z) {
  std::vector<cplx> s(static_cast<std::size_t>(order + 1), 0.0);
  const BinGrid& g = image.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = image.weight(i);
    if (w == 0.0) continue;
    const Point a = frame.to_frame(g.anchor(i));
    const cplx z = complex_z ? cplx(a.x, a.y) : cplx(a.x, 0.0);
    cplx p = w;
    for (int j = 0; j <= order; ++j) {
      s[static_cast<std::size_t>(j)] += p;
      p *= z;
    }
  }
  return s;
}

AtomicUniformMeasure window_center_measure(const BinGrid& grid, int k) {
  return AtomicUniformMeasure(grid.dimension(),
                              std::vector<Point>(static_cast<std::size_t>(k), grid.window().center()));
}

void require_order(int k, const char* what) {
  if (k < 1) throw UsageError(std::string(what) + ": k must be >= 1");
}

}  // namespace

PsiPolynomials::PsiPolynomials(PsiFlavor flavor, std::vector<std::vector<std::complex<double>>> rows)
    : flavor_(flavor), rows_(std::move(rows)) {
  if (rows_.empty()) throw UsageError("PsiPolynomials: need at least psi_0");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != i + 1 || rows_[i][i] != cplx(1.0)) {
      throw UsageError("PsiPolynomials: psi_i must be monic of degree i");
    }
  }
}

std::complex<double> PsiPolynomials::evaluate(int i, std::complex<double> z) const { return pdecon::evaluate(coefficients(i), z); }

PsiPolynomials compute_psi(const KernelMoments& kmoments, PsiFlavor flavor) {
  const int order = kmoments.order();
  if (flavor == PsiFlavor::Real && kmoments.dimension() != 1) {
    throw UsageError("compute_psi: real flavor needs a kernel on the line");
  }
  std::vector<cplx> mk(static_cast<std::size_t>(order + 1));
  for (int j = 0; j <= order; ++j) mk[j] = flavor == PsiFlavor::Real ? cplx(kmoments.raw(j)) : kmoments.complex(j);

  // A = M^{-1}, row by row: A_ij = -sum_{j <= l < i} M_il A_lj.
  std::vector<std::vector<cplx>> a(static_cast<std::size_t>(order + 1));
  for (int i = 0; i <= order; ++i) {
    a[i].assign(static_cast<std::size_t>(i + 1), 0.0);
    a[i][i] = 1.0;
    for (int j = 0; j < i; ++j) {
      cplx s = 0.0;
      for (int l = j; l < i; ++l) s += binomial(i, l) * mk[i - l] * a[l][j];
      a[i][j] = -s;
    }
  }
  return PsiPolynomials(flavor, std::move(a));
}

MultiPsi::MultiPsi(int dimension, int order, std::vector<MultiIndex> indices, std::vector<std::vector<double>> rows)
    : dimension_(dimension), order_(order), indices_(std::move(indices)), rows_(std::move(rows)) {
  if (rows_.size() != indices_.size()) throw UsageError("MultiPsi: one row per multi-index required");
}

double MultiPsi::evaluate(std::size_t alpha, const Point& p) const {
  double s = 0.0;
  for (std::size_t b = 0; b <= alpha; ++b) {
    const double c = rows_[alpha][b];
    if (c != 0.0) s += c * std::pow(p.x, indices_[b].a) * std::pow(p.y, indices_[b].b);
  }
  return s;
}

MultiPsi compute_multi_psi(const KernelMoments& kmoments) {
  const int order = kmoments.order();
  const int d = kmoments.dimension();
  std::vector<MultiIndex> idx{{0, 0}};
  for (const MultiIndex& m : multi_indices(d, order)) idx.push_back(m);
  const std::size_t n = idx.size();

  auto entry = [&](std::size_t r, std::size_t c) -> double {
    const MultiIndex& al = idx[r];
    const MultiIndex& be = idx[c];
    if (be.a > al.a || be.b > al.b) return 0.0;
    return binomial(al.a, be.a) * binomial(al.b, be.b) * kmoments.raw(al.a - be.a, al.b - be.b);
  };

  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    rows[i][i] = 1.0;
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t l = j; l < i; ++l) {
        const double m = entry(i, l);
        if (m != 0.0) s += m * rows[l][j];
      }
      rows[i][j] = -s;
    }
  }
  return MultiPsi(d, order, std::move(idx), std::move(rows));
}

MomentFrame MomentFrame::of(const BinGrid& grid) {
  const Box& w = grid.window();
  const double half = grid.dimension() == 2 ? 0.5 * std::max(w.width(), w.height()) : 0.5 * w.width();
  return {w.center(), half};
}

MomentVector estimate_moments(const CountImage& image, const PsiPolynomials& psi, int k, const MomentFrame& frame) {
  require_order(k, "estimate_moments");
  if (k > psi.order()) throw UsageError("estimate_moments: k exceeds the order of the psi polynomials");
  const bool complex_z = psi.flavor() == PsiFlavor::Complex;
  if (complex_z != (image.grid().dimension() == 2)) {
    throw UsageError("estimate_moments: psi flavor does not match the image dimension");
  }
  const auto sums = weighted_power_sums(image, k, frame, complex_z);
  std::vector<cplx> m(static_cast<std::size_t>(k));
  for (int j = 1; j <= k; ++j) {
    cplx s = 0.0;
    const auto c = psi.coefficients(j);
    for (int l = 0; l <= j; ++l) s += c[l] * sums[l];
    m[j - 1] = complex_z ? s : cplx(s.real(), 0.0);
  }
  return MomentVector(MomentFamily::Complex, image.grid().dimension(), k, std::move(m));
}

MomentVector estimate_multi_moments(const CountImage& image, const MultiPsi& psi, int k, const MomentFrame& frame) {
  require_order(k, "estimate_multi_moments");
  if (k > psi.order() || psi.dimension() != image.grid().dimension()) {
    throw UsageError("estimate_multi_moments: psi order or dimension does not fit");
  }
  const auto idx = psi.indices();
  // Only indices with |alpha| <= k are needed; they form a prefix.
  std::size_t used = 0;
  while (used < idx.size() && idx[used].total() <= k) ++used;

  std::vector<double> sums(used, 0.0);
  const BinGrid& g = image.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = image.weight(i);
    if (w == 0.0) continue;
    const Point a = frame.to_frame(g.anchor(i));
    for (std::size_t b = 0; b < used; ++b) sums[b] += w * std::pow(a.x, idx[b].a) * std::pow(a.y, idx[b].b);
  }
  std::vector<cplx> m;
  m.reserve(used - 1);
  for (std::size_t alpha = 1; alpha < used; ++alpha) {
    double s = 0.0;
    for (std::size_t b = 0; b <= alpha; ++b) s += psi.coefficient(alpha, b) * sums[b];
    m.emplace_back(s, 0.0);
  }
  return MomentVector(MomentFamily::MultiIndex, g.dimension(), k, std::move(m));
}

ElementarySymmetric newton_to_elementary(const MomentVector& moments, int k) {
  require_order(k, "newton_to_elementary");
  if (moments.family() != MomentFamily::Complex || moments.order() < k) {
    throw UsageError("newton_to_elementary: complex moments m_1..m_k are required");
  }
  std::vector<cplx> eps(static_cast<std::size_t>(k + 1), 0.0);
  eps[0] = 1.0;
  for (int l = 1; l <= k; ++l) {
    cplx s = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= l; ++j) {
      s += sign * eps[l - j] * moments[j];
      sign = -sign;
    }
    eps[l] = static_cast<double>(k) / l * s;
  }
  return {std::move(eps)};
}

ComplexPolynomial poly_from_elementary(const ElementarySymmetric& eps) {
  const int k = eps.order();
  if (k < 1 || eps.coefficients[0] != cplx(1.0)) throw UsageError("poly_from_elementary: eps_0 must be 1");
  ComplexPolynomial c(static_cast<std::size_t>(k + 1));
  double sign = 1.0;
  for (int j = 0; j <= k; ++j) {
    c[static_cast<std::size_t>(k - j)] = sign * eps.coefficients[j];
    sign = -sign;
  }
  return c;
}

std::vector<std::complex<double>> atoms_from_moments(const MomentVector& moments, int k) {
  return complex_roots(poly_from_elementary(newton_to_elementary(moments, k)));
}

bool MmDiagnostics::has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }

namespace {

MmEstimate moment_roots_estimate(const CountImage& image, const Kernel& kernel, int k, PsiFlavor flavor) {
  require_order(k, flavor == PsiFlavor::Complex ? "mm_complex" : "mm_real");
  const BinGrid& grid = image.grid();
  const int d = flavor == PsiFlavor::Complex ? 2 : 1;
  if (grid.dimension() != d || kernel.dimension() != d) {
    throw UsageError(flavor == PsiFlavor::Complex ? "mm_complex: needs a planar image and kernel"
                                                  : "mm_real: needs an image and kernel on the line");
  }

  MmDiagnostics diag;
  const KernelMoments km = kernel_moments(kernel, k);
  const MomentVector raw_hat = estimate_moments(image, compute_psi(km, flavor), k);
  diag.moments_hat.assign(raw_hat.values().begin(), raw_hat.values().end());
  if (image.total() == 0.0) {
    spdlog::warn("method of moments: all counts are zero; returning the window center");
    diag.flags.push_back("degenerate_data");
    return {window_center_measure(grid, k), std::move(diag)};
  }

  const MomentFrame frame = MomentFrame::of(grid);
  const MomentVector m_hat = estimate_moments(image, compute_psi(km.scaled(frame.scale), flavor), k, frame);
  const auto roots = atoms_from_moments(m_hat, k);
  std::vector<Point> atoms;
  atoms.reserve(roots.size());
  for (const cplx& r : roots) {
    atoms.push_back(frame.from_frame({r.real(), d == 2 ? r.imag() : 0.0}));
  }
  return {AtomicUniformMeasure(d, std::move(atoms)), std::move(diag)};
}

// sum_alpha (m_alpha(theta) - target_alpha)^2 over atoms stored as
// [x_0, y_0, x_1, y_1, ...] (x only on the line).
double moment_objective(std::span<const double> v, std::span<double> grad, std::span<const MultiIndex> idx,
                        std::span<const double> target, int k, int d) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv_k = 1.0 / k;
  double f = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    double m = 0.0;
    for (int j = 0; j < k; ++j) {
      const double x = v[static_cast<std::size_t>(d * j)];
      const double y = d == 2 ? v[static_cast<std::size_t>(d * j + 1)] : 0.0;
      m += std::pow(x, idx[a].a) * std::pow(y, idx[a].b);
    }
    const double r = m * inv_k - target[a];
    f += r * r;
    for (int j = 0; j < k; ++j) {
      const double x = v[static_cast<std::size_t>(d * j)];
      const double y = d == 2 ? v[static_cast<std::size_t>(d * j + 1)] : 0.0;
      if (idx[a].a > 0) {
        grad[static_cast<std::size_t>(d * j)] +=
            2.0 * r * inv_k * idx[a].a * std::pow(x, idx[a].a - 1) * std::pow(y, idx[a].b);
      }
      if (d == 2 && idx[a].b > 0) {
        grad[static_cast<std::size_t>(d * j + 1)] +=
            2.0 * r * inv_k * idx[a].b * std::pow(x, idx[a].a) * std::pow(y, idx[a].b - 1);
      }
    }
  }
  return f;
}

}  // namespace

MmEstimate mm_complex(const CountImage& image, const Kernel& kernel, int k) {
  return moment_roots_estimate(image, kernel, k, PsiFlavor::Complex);
}

MmEstimate mm_real(const CountImage& image, const Kernel& kernel, int k) {
  return moment_roots_estimate(image, kernel, k, PsiFlavor::Real);
}

MmEstimate fit_multi_moments(const MomentVector& target, int k, const Box& domain, const MmGeneralOptions& options,
                             const std::vector<std::vector<Point>>& extra_starts) {
  require_order(k, "mm_general");
  if (options.restarts < 1) throw UsageError("mm_general: restarts must be >= 1");
  if (target.family() != MomentFamily::MultiIndex || target.order() != k) {
    throw UsageError("mm_general: need multi-index moment targets of order k");
  }
  const int d = target.dimension();
  const auto idx = target.indices();
  std::vector<double> goal;
  for (const auto& v : target.values()) goal.push_back(v.real());

  std::vector<double> lower, upper;
  for (int j = 0; j < k; ++j) {
    lower.push_back(domain.x0);
    upper.push_back(domain.x1);
    if (d == 2) {
      lower.push_back(domain.y0);
      upper.push_back(domain.y1);
    }
  }
  auto to_measure = [&](std::span<const double> v) {
    std::vector<Point> atoms;
    for (int j = 0; j < k; ++j) atoms.push_back({v[d * j], d == 2 ? v[d * j + 1] : 0.0});
    return AtomicUniformMeasure(d, std::move(atoms));
  };

  MmDiagnostics diag;
  diag.moments_hat.assign(target.values().begin(), target.values().end());
  if (k == 1) {
    // The objective separates per coordinate; clipping the first moments is exact.
    std::vector<double> v{std::clamp(target.at({1, 0}), domain.x0, domain.x1)};
    if (d == 2) v.push_back(std::clamp(target.at({0, 1}), domain.y0, domain.y1));
    std::vector<double> g(v.size());
    diag.objective = moment_objective(v, g, idx, goal, k, d);
    return {to_measure(v), std::move(diag)};
  }

  const Objective objective = [&](std::span<const double> v, std::span<double> g) {
    return moment_objective(v, g, idx, goal, k, d);
  };
  MinimizeOptions mo;
  mo.max_iterations = options.max_iterations;
  mo.gradient_tolerance = 1e-13;
  mo.initial_step = 0.05 * std::max(domain.width(), d == 2 ? domain.height() : 0.0);

  std::vector<std::vector<double>> starts;
  for (const auto& s : extra_starts) {
    std::vector<double> v;
    for (const Point& p : s) {
      v.push_back(std::clamp(p.x, domain.x0, domain.x1));
      if (d == 2) v.push_back(std::clamp(p.y, domain.y0, domain.y1));
    }
    if (v.size() == lower.size()) starts.push_back(std::move(v));
  }
  for (int r = 0; r < options.restarts; ++r) {
    CounterRng rng(derive_seed(options.seed, 0x4D4D, static_cast<std::uint64_t>(r)));
    std::vector<double> v(lower.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = lower[i] + (upper[i] - lower[i]) * rng.uniform();
    starts.push_back(std::move(v));
  }

  std::optional<MinimizeResult> best;
  for (auto& s : starts) {
    MinimizeResult r = minimize_box(objective, std::move(s), lower, upper, mo);
    if (!best || r.value < best->value) best = std::move(r);
  }
  diag.objective = best->value;
  if (!best->converged) diag.flags.push_back("optimizer_iteration_limit");
  return {to_measure(best->x), std::move(diag)};
}

MmEstimate mm_general(const CountImage& image, const Kernel& kernel, int k, const MmGeneralOptions& options) {
  require_order(k, "mm_general");
  const BinGrid& grid = image.grid();
  const int d = grid.dimension();
  if (kernel.dimension() != d) throw UsageError("mm_general: kernel and image dimensions differ");
  const Box domain = options.domain.value_or(grid.window());

  if (image.total() == 0.0) {
    spdlog::warn("mm_general: all counts are zero; returning the window center");
    MmDiagnostics diag;
    diag.flags.push_back("degenerate_data");
    return {window_center_measure(grid, k), std::move(diag)};
  }

  const MomentFrame frame = MomentFrame::of(grid);
  const KernelMoments km = kernel_moments(kernel, k);
  const MomentVector target = estimate_multi_moments(image, compute_multi_psi(km.scaled(frame.scale)), k, frame);
  const Point lo = frame.to_frame({domain.x0, domain.y0});
  const Point hi = frame.to_frame({domain.x1, domain.y1});
  const Box frame_domain{lo.x, hi.x, d == 2 ? lo.y : 0.0, d == 2 ? hi.y : 0.0};

  std::vector<std::vector<Point>> extra;
  if (options.moment_start && k > 1) {
    try {
      const MmEstimate seed = d == 2 ? mm_complex(image, kernel, k) : mm_real(image, kernel, k);
      std::vector<Point> s;
      for (const Point& p : seed.measure.atoms()) s.push_back(frame.to_frame(p));
      extra.push_back(std::move(s));
    } catch (const NumericalError& e) {
      spdlog::warn("mm_general: moment start unavailable: {}", e.what());
    }
  }

  MmEstimate fit = fit_multi_moments(target, k, frame_domain, options, extra);
  std::vector<Point> atoms;
  for (const Point& p : fit.measure.atoms()) atoms.push_back(frame.from_frame(p));
  if (d == 1) {
    for (Point& p : atoms) p.y = 0.0;
  }
  const MomentVector raw = estimate_multi_moments(image, compute_multi_psi(km), k);
  fit.diagnostics.moments_hat.assign(raw.values().begin(), raw.values().end());
  return {AtomicUniformMeasure(d, std::move(atoms)), std::move(fit.diagnostics)};
}

void to_json(nlohmann::json& j, const MmEstimate& estimate) {
  to_json(j, estimate.measure);
  nlohmann::json moments = nlohmann::json::array();
  for (const auto& m : estimate.diagnostics.moments_hat) moments.push_back({m.real(), m.imag()});
  nlohmann::json diag{{"moments_hat", std::move(moments)}, {"flags", estimate.diagnostics.flags}};
  diag["objective"] = estimate.diagnostics.objective ? nlohmann::json(*estimate.diagnostics.objective) : nlohmann::json();
  j["diagnostics"] = std::move(diag);
}

}  // namespace pdecon
