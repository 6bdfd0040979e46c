#pragma once

#include <complex>
#include <filesystem>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pdecon/measures.hpp"

namespace pdecon {

/// Axis-aligned rectangle [x0, x1] x [y0, y1]. One-dimensional code ignores y.
struct Box {
  double x0 = 0.0;
  double x1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Point center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  Box inflated(double margin) const { return {x0 - margin, x1 + margin, y0 - margin, y1 + margin}; }
  bool contains(const Point& p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
};

struct IsotropicGaussian {
  double sigma = 1.0;
};

/// Covariance [[xx, xy], [xy, yy]] of a centered bivariate normal density.
struct AnisotropicGaussian {
  double xx = 1.0;
  double xy = 0.0;
  double yy = 1.0;
};

/// Piecewise-constant density on a regular grid of square cells. Cell (r, c)
/// covers [ox + c h, ox + (c+1) h] x [oy + r h, oy + (r+1) h]; one-dimensional
/// kernels have a single row and ignore oy.
struct TabulatedKernel {
  int cols = 0;
  int rows = 1;
  double spacing = 1.0;
  Point origin;
  std::vector<double> density;
};

class Kernel {
 public:
  using Variant = std::variant<IsotropicGaussian, AnisotropicGaussian, TabulatedKernel>;

  static Kernel isotropic_gaussian(int dimension, double sigma);
  static Kernel gaussian(const AnisotropicGaussian& covariance);
  /// Samples are rescaled so the density integrates to one; a deviation beyond
  /// 1e-3 is logged.
  static Kernel tabulated(int dimension, TabulatedKernel table);
  /// Uniform density on [-h, h]^d, as a one-cell table.
  static Kernel uniform_box(int dimension, double half_width);

  /// Row-major CSV samples plus a JSON sidecar {"spacing": h, "origin": [x0, y0]}.
  static Kernel load_tabulated(const std::filesystem::path& csv, const std::filesystem::path& sidecar);

  int dimension() const { return dimension_; }
  const Variant& variant() const { return variant_; }

  bool is_gaussian() const { return !std::holds_alternative<TabulatedKernel>(variant_); }
  /// Gaussian with diagonal covariance: bin masses factor over the axes.
  bool is_separable() const;
  /// Marginal standard deviation along an axis (Gaussian kernels only).
  double axis_sigma(int axis) const;
  /// Scale used for step sizes and tail truncation: sigma for Gaussians,
  /// half the larger table extent otherwise.
  double length_scale() const;
  /// Box around the origin outside of which the density is zero (tabulated)
  /// or below 8 marginal standard deviations (Gaussian).
  Box support() const;
  bool rotationally_symmetric() const;

  double density(const Point& offset) const;

 private:
  Kernel(int dimension, Variant v) : dimension_(dimension), variant_(std::move(v)) {}

  int dimension_;
  Variant variant_;
};

/// Raw moments m_{a,b} = int x^a y^b K(x, y) dx dy for a + b <= order
/// (b = 0 only in one dimension).
class KernelMoments {
 public:
  KernelMoments(int dimension, int order, std::vector<std::vector<double>> table);

  int dimension() const { return dimension_; }
  int order() const { return order_; }
  double raw(int a, int b = 0) const;
  /// int z^j K(z) dz with z = x + iy (z = x on the line).
  std::complex<double> complex(int j) const;
  /// Moments of the kernel pushed forward by z -> z / scale.
  KernelMoments scaled(double scale) const;

 private:
  int dimension_;
  int order_;
  std::vector<std::vector<double>> table_;
};

KernelMoments kernel_moments(const Kernel& kernel, int order);

/// int_bin K(x - atom) dx. Separable Gaussians use products of normal CDF
/// differences; anisotropic Gaussians integrate the conditional normal CDF
/// adaptively; tabulated kernels sum exact cell/bin overlaps. Gaussian bins
/// farther than 8 sigma from the atom return 0.
double atom_bin_mass(const Kernel& kernel, const Point& atom, const Box& bin);

/// Adaptive-quadrature route for Gaussian kernels (relative tolerance
/// `rel_tol`), independent of the closed form. Tabulated kernels fall back to
/// the exact overlap sum.
double atom_bin_mass_quadrature(const Kernel& kernel, const Point& atom, const Box& bin, double rel_tol = 1e-10);

/// K * mu (bin) = (1/k) sum_i int_bin K(x - theta_i) dx.
double bin_intensity(const Kernel& kernel, const AtomicUniformMeasure& mu, const Box& bin);

/// Phi(b) - Phi(a) for the standard normal, accurate in both tails.
double normal_interval(double a, double b);
double normal_pdf(double z);

void to_json(nlohmann::json& j, const Kernel& kernel);
/// {"type": "gaussian", "sigma": s} | {"type": "gaussian", "covariance": [[..],[..]]}
/// | {"type": "box", "half_width": h} | {"type": "tabulated", "csv": path, "meta": path}
Kernel kernel_from_json(const nlohmann::json& j, int dimension);

}  // namespace pdecon
