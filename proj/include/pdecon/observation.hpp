#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdecon/errors.hpp"
#include "pdecon/kernels.hpp"
#include "pdecon/measures.hpp"

namespace pdecon {

enum class AnchorRule { Center, LowerLeft };

/// Regular partition of a window into nx * ny rectangular bins (ny = 1 on the
/// line). Bin i = iy * nx + ix covers column ix and row iy; rows grow with y.
class BinGrid {
 public:
  BinGrid(int dimension, Box window, int nx, int ny, AnchorRule anchor = AnchorRule::Center);

  static BinGrid square(Box window, int per_axis) { return BinGrid(2, window, per_axis, per_axis); }
  static BinGrid line(double x0, double x1, int n) { return BinGrid(1, {x0, x1, 0.0, 0.0}, n, 1); }

  int dimension() const { return dimension_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }
  const Box& window() const { return window_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  AnchorRule anchor_rule() const { return anchor_; }

  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * nx_ + ix; }
  Box bin(std::size_t i) const;
  Box bin(int ix, int iy) const;
  /// gamma_i: the bin center, or its lower-left corner.
  Point anchor(std::size_t i) const;
  double anchor_x(int ix) const;
  double anchor_y(int iy) const;

  BinGrid with_anchor(AnchorRule rule) const { return BinGrid(dimension_, window_, nx_, ny_, rule); }
  /// Bins [ix0, ix0 + nx) x [iy0, iy0 + ny) as a grid of their own.
  BinGrid subgrid(int ix0, int iy0, int nx, int ny) const;

 private:
  int dimension_;
  Box window_;
  int nx_;
  int ny_;
  double dx_;
  double dy_;
  AnchorRule anchor_;
};

/// Counts X_i over a BinGrid with exposure t. t = kInfinity marks the
/// noiseless regime in which counts hold the bin intensities themselves.
/// Simulated and loaded images are integer-valued; derived images (denoised
/// cell crops) may carry fractional counts.
class CountImage {
 public:
  CountImage(BinGrid grid, std::vector<double> counts, double exposure);

  const BinGrid& grid() const { return grid_; }
  std::span<const double> counts() const { return counts_; }
  double exposure() const { return exposure_; }
  bool noiseless() const { return exposure_ == kInfinity; }
  double total() const;
  bool is_integral() const;

  /// X_i / t, or the stored intensity when noiseless.
  double weight(std::size_t i) const { return noiseless() ? counts_[i] : counts_[i] / exposure_; }
  /// The t used in likelihoods: 1 in the noiseless regime (counts are
  /// intensities), t otherwise.
  double likelihood_exposure() const { return noiseless() ? 1.0 : exposure_; }

 private:
  BinGrid grid_;
  std::vector<double> counts_;
  double exposure_;
};

/// int_{B_i} K(x - atom) dx for every bin i. When `grad_x`/`grad_y` are
/// non-empty they receive the derivatives with respect to the atom
/// coordinates (closed form for separable Gaussians, central differences
/// otherwise). Bins beyond the kernel support are left at zero.
void atom_footprint(const Kernel& kernel, const BinGrid& grid, const Point& atom, std::span<double> mass,
                    std::span<double> grad_x = {}, std::span<double> grad_y = {});

/// lambda_i = K * mu (B_i) for every bin.
std::vector<double> intensities(const Kernel& kernel, const AtomicUniformMeasure& mu, const BinGrid& grid);

/// X_i ~ Poi(t lambda_i), independent; deterministic in (seed, stream).
CountImage simulate(const Kernel& kernel, const AtomicUniformMeasure& mu, const BinGrid& grid, double t,
                    std::uint64_t seed, std::uint64_t stream = 0);

/// counts_i = lambda_i, t = infinity.
CountImage noiseless(const Kernel& kernel, const AtomicUniformMeasure& mu, const BinGrid& grid);

class ImageDimensionError : public FormatError {
 public:
  using FormatError::FormatError;
};
class NegativeCountError : public FormatError {
 public:
  using FormatError::FormatError;
};
class MetadataError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct ImagePaths {
  std::filesystem::path csv;
  std::filesystem::path json;

  /// Accepts either file of the pair and derives the sibling by extension.
  static ImagePaths from(const std::filesystem::path& any);
};

/// Reads image.csv (row-major counts, row r = bin row iy = r) and image.json
/// {"width_px", "height_px", "pixel_size", "units", "t"} plus optional
/// "origin": [x0, y0] and "dimension". "t" may be a number, "inf", or absent
/// (then the total count is used and a warning logged).
CountImage load_image(const std::filesystem::path& path);

/// Writes the pair; finite-t integer counts are printed as plain decimal
/// integers.
void save_image(const CountImage& image, const ImagePaths& paths, const std::string& units = "");

}  // namespace pdecon
