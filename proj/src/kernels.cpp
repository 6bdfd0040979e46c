#include "pdecon/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <spdlog/spdlog.h>

#include "pdecon/errors.hpp"

namespace pdecon {

namespace {

constexpr double kTailSigmas = 8.0;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double double_factorial_odd(int n) {
  // (n-1)!! for even n >= 0
  double r = 1.0;
  for (int i = n - 1; i > 1; i -= 2) r *= i;
  return r;
}

double centered_normal_moment(double variance, int n) {
  if (n % 2 == 1) return 0.0;
  return std::pow(variance, 0.5 * n) * double_factorial_odd(n);
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// int_{lo}^{hi} x^n dx
double power_integral(double lo, double hi, int n) {
  return (std::pow(hi, n + 1) - std::pow(lo, n + 1)) / (n + 1);
}

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

double tabulated_bin_mass(const TabulatedKernel& t, int dimension, const Point& atom, const Box& bin) {
  const double ox = t.origin.x + atom.x;
  const double oy = t.origin.y + atom.y;
  const double h = t.spacing;
  const int c0 = std::max(0, static_cast<int>(std::floor((bin.x0 - ox) / h)));
  const int c1 = std::min(t.cols - 1, static_cast<int>(std::floor((bin.x1 - ox) / h)));
  if (c0 > c1) return 0.0;
  if (dimension == 1) {
    double sum = 0.0;
    for (int c = c0; c <= c1; ++c) sum += t.density[c] * overlap(ox + c * h, ox + (c + 1) * h, bin.x0, bin.x1);
    return sum;
  }
  const int r0 = std::max(0, static_cast<int>(std::floor((bin.y0 - oy) / h)));
  const int r1 = std::min(t.rows - 1, static_cast<int>(std::floor((bin.y1 - oy) / h)));
  double sum = 0.0;
  for (int r = r0; r <= r1; ++r) {
    const double wy = overlap(oy + r * h, oy + (r + 1) * h, bin.y0, bin.y1);
    if (wy == 0.0) continue;
    for (int c = c0; c <= c1; ++c) {
      sum += t.density[static_cast<std::size_t>(r) * t.cols + c] * wy *
             overlap(ox + c * h, ox + (c + 1) * h, bin.x0, bin.x1);
    }
  }
  return sum;
}

// Integrates the x-marginal density times the conditional probability of the
// y-range, adaptively over x.
double gaussian_conditional_quadrature(const AnisotropicGaussian& cov, int dimension, const Point& atom,
                                       const Box& bin, double rel_tol) {
  const double sx = std::sqrt(cov.xx);
  double lo = std::max(bin.x0 - atom.x, -kTailSigmas * sx);
  double hi = std::min(bin.x1 - atom.x, kTailSigmas * sx);
  if (lo >= hi) return 0.0;
  const double slope = cov.xy / cov.xx;
  const double cond_sd = std::sqrt(std::max(cov.yy - cov.xy * slope, 0.0));
  auto integrand = [&](double u) {
    const double marginal = normal_pdf(u / sx) / sx;
    if (dimension == 1) return marginal;
    const double mean = slope * u;
    const double a = (bin.y0 - atom.y - mean) / cond_sd;
    const double b = (bin.y1 - atom.y - mean) / cond_sd;
    return marginal * normal_interval(a, b);
  };
  double error = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 15, rel_tol, &error);
}

AnisotropicGaussian as_covariance(const Kernel::Variant& v) {
  if (const auto* iso = std::get_if<IsotropicGaussian>(&v)) {
    const double s2 = iso->sigma * iso->sigma;
    return {s2, 0.0, s2};
  }
  return std::get<AnisotropicGaussian>(v);
}

}  // namespace

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_interval(double a, double b) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  if (a >= 0.0) return 0.5 * (std::erfc(a * inv_sqrt2) - std::erfc(b * inv_sqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * inv_sqrt2) - std::erfc(-a * inv_sqrt2));
  return 0.5 * (std::erf(b * inv_sqrt2) - std::erf(a * inv_sqrt2));
}

Kernel Kernel::isotropic_gaussian(int dimension, double sigma) {
  if (dimension != 1 && dimension != 2) throw UsageError("Kernel: dimension must be 1 or 2");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("Kernel: sigma must be positive");
  return Kernel(dimension, IsotropicGaussian{sigma});
}

Kernel Kernel::gaussian(const AnisotropicGaussian& c) {
  const bool symmetric_pd = c.xx > 0.0 && c.yy > 0.0 && c.xx * c.yy - c.xy * c.xy > 0.0;
  if (!symmetric_pd || !std::isfinite(c.xx + c.xy + c.yy)) {
    throw UsageError("Kernel: covariance must be positive definite");
  }
  return Kernel(2, c);
}

Kernel Kernel::tabulated(int dimension, TabulatedKernel table) {
  if (dimension != 1 && dimension != 2) throw UsageError("Kernel: dimension must be 1 or 2");
  if (dimension == 1) table.rows = 1;
  if (table.cols < 1 || table.rows < 1 ||
      table.density.size() != static_cast<std::size_t>(table.cols) * static_cast<std::size_t>(table.rows)) {
    throw UsageError("Kernel: tabulated sample count does not match the grid shape");
  }
  if (!(table.spacing > 0.0)) throw UsageError("Kernel: tabulated spacing must be positive");
  double total = 0.0;
  for (double v : table.density) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("Kernel: tabulated samples must be finite and nonnegative");
    total += v;
  }
  total *= std::pow(table.spacing, dimension);
  if (!(total > 0.0)) throw UsageError("Kernel: tabulated kernel has zero mass");
  if (std::abs(total - 1.0) > 1e-3) {
    spdlog::warn("tabulated kernel integrates to {:.6g}; normalizing", total);
  }
  for (double& v : table.density) v /= total;
  return Kernel(dimension, std::move(table));
}

Kernel Kernel::uniform_box(int dimension, double half_width) {
  if (!(half_width > 0.0)) throw UsageError("Kernel: box half width must be positive");
  TabulatedKernel t;
  t.cols = 1;
  t.rows = 1;
  t.spacing = 2.0 * half_width;
  t.origin = {-half_width, dimension == 2 ? -half_width : 0.0};
  t.density = {1.0 / std::pow(t.spacing, dimension)};
  return tabulated(dimension, std::move(t));
}

Kernel Kernel::load_tabulated(const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
  std::ifstream meta_in(sidecar);
  if (!meta_in) throw FormatError("cannot open kernel metadata " + sidecar.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed kernel metadata " + sidecar.string() + ": " + e.what());
  }
  if (!meta.contains("spacing") || !meta.contains("origin")) {
    throw FormatError("kernel metadata needs \"spacing\" and \"origin\"");
  }

  std::ifstream in(csv);
  if (!in) throw FormatError("cannot open kernel samples " + csv.string());
  TabulatedKernel t;
  t.rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      t.density.push_back(std::stod(cell));
      ++cols;
    }
    if (t.rows == 0) t.cols = cols;
    if (cols != t.cols) throw FormatError("kernel CSV rows have unequal lengths");
    ++t.rows;
  }
  const auto& origin = meta.at("origin");
  const int dimension = (t.rows == 1 && origin.size() == 1) ? 1 : 2;
  t.spacing = meta.at("spacing").get<double>();
  t.origin = {origin.at(0).get<double>(), dimension == 2 ? origin.at(1).get<double>() : 0.0};
  return tabulated(dimension, std::move(t));
}

bool Kernel::is_separable() const {
  return std::visit(overloaded{[](const IsotropicGaussian&) { return true; },
                               [](const AnisotropicGaussian& c) { return c.xy == 0.0; },
                               [](const TabulatedKernel&) { return false; }},
                    variant_);
}

double Kernel::axis_sigma(int axis) const {
  if (!is_gaussian()) throw UsageError("Kernel: axis_sigma requires a Gaussian kernel");
  const AnisotropicGaussian c = as_covariance(variant_);
  return std::sqrt(axis == 0 ? c.xx : c.yy);
}

double Kernel::length_scale() const {
  if (is_gaussian()) {
    return dimension_ == 1 ? axis_sigma(0) : std::max(axis_sigma(0), axis_sigma(1));
  }
  const auto& t = std::get<TabulatedKernel>(variant_);
  return 0.5 * t.spacing * std::max(t.cols, t.rows);
}

Box Kernel::support() const {
  if (is_gaussian()) {
    const double sx = kTailSigmas * axis_sigma(0);
    const double sy = dimension_ == 2 ? kTailSigmas * axis_sigma(1) : 0.0;
    return {-sx, sx, -sy, sy};
  }
  const auto& t = std::get<TabulatedKernel>(variant_);
  return {t.origin.x, t.origin.x + t.cols * t.spacing, t.origin.y,
          dimension_ == 2 ? t.origin.y + t.rows * t.spacing : 0.0};
}

bool Kernel::rotationally_symmetric() const {
  if (dimension_ != 2) return false;
  return std::visit(overloaded{[](const IsotropicGaussian&) { return true; },
                               [](const AnisotropicGaussian& c) { return c.xy == 0.0 && c.xx == c.yy; },
                               [](const TabulatedKernel&) { return false; }},
                    variant_);
}

double Kernel::density(const Point& d) const {
  if (const auto* t = std::get_if<TabulatedKernel>(&variant_)) {
    const int c = static_cast<int>(std::floor((d.x - t->origin.x) / t->spacing));
    const int r = dimension_ == 2 ? static_cast<int>(std::floor((d.y - t->origin.y) / t->spacing)) : 0;
    if (c < 0 || c >= t->cols || r < 0 || r >= t->rows) return 0.0;
    return t->density[static_cast<std::size_t>(r) * t->cols + c];
  }
  const AnisotropicGaussian c = as_covariance(variant_);
  if (dimension_ == 1) return normal_pdf(d.x / std::sqrt(c.xx)) / std::sqrt(c.xx);
  const double det = c.xx * c.yy - c.xy * c.xy;
  const double q = (c.yy * d.x * d.x - 2.0 * c.xy * d.x * d.y + c.xx * d.y * d.y) / det;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

KernelMoments::KernelMoments(int dimension, int order, std::vector<std::vector<double>> table)
    : dimension_(dimension), order_(order), table_(std::move(table)) {
  if (order_ < 0 || table_.size() != static_cast<std::size_t>(order_ + 1)) {
    throw UsageError("KernelMoments: table shape does not match order");
  }
}

double KernelMoments::raw(int a, int b) const {
  if (a < 0 || b < 0 || a + b > order_ || (dimension_ == 1 && b != 0)) {
    throw UsageError("KernelMoments: moment index out of range");
  }
  return table_[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

std::complex<double> KernelMoments::complex(int j) const {
  if (dimension_ == 1) return raw(j, 0);
  // (x + iy)^j = sum_b C(j, b) i^b x^{j-b} y^b
  std::complex<double> sum = 0.0;
  std::complex<double> ib = 1.0;
  for (int b = 0; b <= j; ++b) {
    sum += binomial(j, b) * ib * raw(j - b, b);
    ib *= std::complex<double>(0.0, 1.0);
  }
  return sum;
}

KernelMoments KernelMoments::scaled(double scale) const {
  auto table = table_;
  for (int a = 0; a <= order_; ++a)
    for (int b = 0; a + b <= order_ && b < static_cast<int>(table[a].size()); ++b)
      table[a][b] /= std::pow(scale, a + b);
  return KernelMoments(dimension_, order_, std::move(table));
}

KernelMoments kernel_moments(const Kernel& kernel, int order) {
  if (order < 0) throw UsageError("kernel_moments: order must be nonnegative");
  const int d = kernel.dimension();
  std::vector<std::vector<double>> table(static_cast<std::size_t>(order + 1));
  for (int a = 0; a <= order; ++a) table[a].assign(d == 1 ? 1 : static_cast<std::size_t>(order - a + 1), 0.0);

  std::visit(overloaded{
                 [&](const TabulatedKernel& t) {
                   for (int r = 0; r < t.rows; ++r) {
                     for (int c = 0; c < t.cols; ++c) {
                       const double w = t.density[static_cast<std::size_t>(r) * t.cols + c];
                       if (w == 0.0) continue;
                       const double xa = t.origin.x + c * t.spacing, xb = xa + t.spacing;
                       const double ya = t.origin.y + r * t.spacing, yb = ya + t.spacing;
                       for (int a = 0; a <= order; ++a) {
                         const double ix = power_integral(xa, xb, a);
                         if (d == 1) {
                           table[a][0] += w * ix;
                           continue;
                         }
                         for (int b = 0; a + b <= order; ++b) table[a][b] += w * ix * power_integral(ya, yb, b);
                       }
                     }
                   }
                 },
                 [&](const auto&) {
                   const AnisotropicGaussian c = as_covariance(kernel.variant());
                   if (d == 1) {
                     for (int a = 0; a <= order; ++a) table[a][0] = centered_normal_moment(c.xx, a);
                     return;
                   }
                   // Y = beta X + W with W independent of X.
                   const double beta = c.xy / c.xx;
                   const double w_var = c.yy - c.xy * beta;
                   for (int a = 0; a <= order; ++a) {
                     for (int b = 0; a + b <= order; ++b) {
                       double s = 0.0;
                       for (int j = 0; j <= b; ++j) {
                         s += binomial(b, j) * std::pow(beta, j) * centered_normal_moment(c.xx, a + j) *
                              centered_normal_moment(w_var, b - j);
                       }
                       table[a][b] = s;
                     }
                   }
                 },
             },
             kernel.variant());
  return KernelMoments(d, order, std::move(table));
}

double atom_bin_mass(const Kernel& kernel, const Point& atom, const Box& bin) {
  const int d = kernel.dimension();
  if (const auto* t = std::get_if<TabulatedKernel>(&kernel.variant())) return tabulated_bin_mass(*t, d, atom, bin);

  const double sx = kernel.axis_sigma(0);
  const double sy = d == 2 ? kernel.axis_sigma(1) : 1.0;
  const double gap_x = std::max({bin.x0 - atom.x, atom.x - bin.x1, 0.0}) / sx;
  const double gap_y = d == 2 ? std::max({bin.y0 - atom.y, atom.y - bin.y1, 0.0}) / sy : 0.0;
  if (std::hypot(gap_x, gap_y) > kTailSigmas) return 0.0;

  if (kernel.is_separable()) {
    const double mx = normal_interval((bin.x0 - atom.x) / sx, (bin.x1 - atom.x) / sx);
    if (d == 1) return mx;
    return mx * normal_interval((bin.y0 - atom.y) / sy, (bin.y1 - atom.y) / sy);
  }
  return gaussian_conditional_quadrature(as_covariance(kernel.variant()), d, atom, bin, 1e-10);
}

double atom_bin_mass_quadrature(const Kernel& kernel, const Point& atom, const Box& bin, double rel_tol) {
  if (const auto* t = std::get_if<TabulatedKernel>(&kernel.variant())) {
    return tabulated_bin_mass(*t, kernel.dimension(), atom, bin);
  }
  return gaussian_conditional_quadrature(as_covariance(kernel.variant()), kernel.dimension(), atom, bin, rel_tol);
}

double bin_intensity(const Kernel& kernel, const AtomicUniformMeasure& mu, const Box& bin) {
  if (kernel.dimension() != mu.dimension()) throw UsageError("bin_intensity: kernel and measure dimensions differ");
  if (!(bin.x1 > bin.x0) || (kernel.dimension() == 2 && !(bin.y1 > bin.y0))) {
    throw UsageError("bin_intensity: degenerate bin");
  }
  double sum = 0.0;
  for (const Point& p : mu.atoms()) sum += atom_bin_mass(kernel, p, bin);
  return sum / static_cast<double>(mu.size());
}

void to_json(nlohmann::json& j, const Kernel& kernel) {
  std::visit(overloaded{
                 [&](const IsotropicGaussian& g) { j = {{"type", "gaussian"}, {"sigma", g.sigma}}; },
                 [&](const AnisotropicGaussian& c) {
                   j = {{"type", "gaussian"}, {"covariance", {{c.xx, c.xy}, {c.xy, c.yy}}}};
                 },
                 [&](const TabulatedKernel& t) {
                   j = {{"type", "tabulated"},
                        {"cols", t.cols},
                        {"rows", t.rows},
                        {"spacing", t.spacing},
                        {"origin", {t.origin.x, t.origin.y}}};
                 },
             },
             kernel.variant());
}

Kernel kernel_from_json(const nlohmann::json& j, int dimension) {
  if (!j.is_object() || !j.contains("type")) throw UsageError("kernel: missing field \"type\"");
  const auto type = j.at("type").get<std::string>();
  if (type == "gaussian") {
    if (j.contains("sigma")) return Kernel::isotropic_gaussian(dimension, j.at("sigma").get<double>());
    if (j.contains("covariance")) {
      const auto& c = j.at("covariance");
      return Kernel::gaussian({c.at(0).at(0).get<double>(), c.at(0).at(1).get<double>(), c.at(1).at(1).get<double>()});
    }
    throw UsageError("kernel: gaussian needs \"sigma\" or \"covariance\"");
  }
  if (type == "box") {
    if (!j.contains("half_width")) throw UsageError("kernel: box needs \"half_width\"");
    return Kernel::uniform_box(dimension, j.at("half_width").get<double>());
  }
  if (type == "tabulated") {
    if (!j.contains("csv") || !j.contains("meta")) throw UsageError("kernel: tabulated needs \"csv\" and \"meta\"");
    return Kernel::load_tabulated(j.at("csv").get<std::string>(), j.at("meta").get<std::string>());
  }
  throw UsageError("kernel: unknown type \"" + type + "\"");
}

}  // namespace pdecon
