#include "pdecon/observation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pdecon/rng.hpp"

namespace pdecon {

BinGrid::BinGrid(int dimension, Box window, int nx, int ny, AnchorRule anchor)
    : dimension_(dimension), window_(window), nx_(nx), ny_(ny), anchor_(anchor) {
  if (dimension_ != 1 && dimension_ != 2) throw UsageError("BinGrid: dimension must be 1 or 2");
  if (dimension_ == 1) {
    ny_ = 1;
    window_.y0 = 0.0;
    window_.y1 = 0.0;
  }
  if (nx_ < 1 || ny_ < 1) throw UsageError("BinGrid: resolution must be positive");
  if (!(window_.x1 > window_.x0) || (dimension_ == 2 && !(window_.y1 > window_.y0))) {
    throw UsageError("BinGrid: window must have positive extent");
  }
  dx_ = window_.width() / nx_;
  dy_ = dimension_ == 2 ? window_.height() / ny_ : 0.0;
}

Box BinGrid::bin(int ix, int iy) const {
  // Edges are computed from the window so neighbouring bins share them exactly.
  const double x0 = ix == 0 ? window_.x0 : window_.x0 + dx_ * ix;
  const double x1 = ix == nx_ - 1 ? window_.x1 : window_.x0 + dx_ * (ix + 1);
  if (dimension_ == 1) return {x0, x1, 0.0, 0.0};
  const double y0 = iy == 0 ? window_.y0 : window_.y0 + dy_ * iy;
  const double y1 = iy == ny_ - 1 ? window_.y1 : window_.y0 + dy_ * (iy + 1);
  return {x0, x1, y0, y1};
}

Box BinGrid::bin(std::size_t i) const {
  return bin(static_cast<int>(i % static_cast<std::size_t>(nx_)), static_cast<int>(i / static_cast<std::size_t>(nx_)));
}

double BinGrid::anchor_x(int ix) const {
  return window_.x0 + dx_ * (ix + (anchor_ == AnchorRule::Center ? 0.5 : 0.0));
}

double BinGrid::anchor_y(int iy) const {
  if (dimension_ == 1) return 0.0;
  return window_.y0 + dy_ * (iy + (anchor_ == AnchorRule::Center ? 0.5 : 0.0));
}

Point BinGrid::anchor(std::size_t i) const {
  const int ix = static_cast<int>(i % static_cast<std::size_t>(nx_));
  const int iy = static_cast<int>(i / static_cast<std::size_t>(nx_));
  return {anchor_x(ix), anchor_y(iy)};
}

BinGrid BinGrid::subgrid(int ix0, int iy0, int nx, int ny) const {
  if (ix0 < 0 || iy0 < 0 || nx < 1 || ny < 1 || ix0 + nx > nx_ || iy0 + ny > ny_) {
    throw UsageError("BinGrid: subgrid out of range");
  }
  const Box lo = bin(ix0, iy0);
  const Box hi = bin(ix0 + nx - 1, iy0 + ny - 1);
  return BinGrid(dimension_, {lo.x0, hi.x1, lo.y0, hi.y1}, nx, ny, anchor_);
}

CountImage::CountImage(BinGrid grid, std::vector<double> counts, double exposure)
    : grid_(std::move(grid)), counts_(std::move(counts)), exposure_(exposure) {
  if (counts_.size() != grid_.size()) {
    throw UsageError("CountImage: expected " + std::to_string(grid_.size()) + " counts, got " +
                     std::to_string(counts_.size()));
  }
  if (!(exposure_ > 0.0)) throw UsageError("CountImage: exposure t must be positive");
  for (double c : counts_) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw UsageError("CountImage: counts must be finite and nonnegative");
  }
}

double CountImage::total() const {
  double s = 0.0;
  for (double c : counts_) s += c;
  return s;
}

bool CountImage::is_integral() const {
  return std::all_of(counts_.begin(), counts_.end(), [](double c) { return c == std::floor(c); });
}

namespace {

struct IndexRange {
  int lo;
  int hi;  // inclusive; lo > hi means empty
};

IndexRange covering_bins(double origin, double step, int n, double a, double b) {
  const int lo = std::max(0, static_cast<int>(std::floor((a - origin) / step)));
  const int hi = std::min(n - 1, static_cast<int>(std::floor((b - origin) / step)));
  return {lo, hi};
}

void separable_axis(const Kernel& kernel, int axis, double coord, int n, const std::function<Box(int)>& edge,
                    std::vector<double>& mass, std::vector<double>& grad, bool want_grad) {
  const double s = kernel.axis_sigma(axis);
  mass.assign(static_cast<std::size_t>(n), 0.0);
  grad.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const Box b = edge(i);
    const double lo = axis == 0 ? b.x0 : b.y0;
    const double hi = axis == 0 ? b.x1 : b.y1;
    const double za = (lo - coord) / s;
    const double zb = (hi - coord) / s;
    if (za > 8.0 || zb < -8.0) continue;
    mass[i] = normal_interval(za, zb);
    if (want_grad) grad[i] = (normal_pdf(za) - normal_pdf(zb)) / s;
  }
}

}  // namespace

void atom_footprint(const Kernel& kernel, const BinGrid& grid, const Point& atom, std::span<double> mass,
                    std::span<double> grad_x, std::span<double> grad_y) {
  const bool want_grad = !grad_x.empty();
  if (mass.size() != grid.size() || (want_grad && (grad_x.size() != grid.size() ||
                                                   (grid.dimension() == 2 && grad_y.size() != grid.size())))) {
    throw UsageError("atom_footprint: output spans must match the grid size");
  }
  std::fill(mass.begin(), mass.end(), 0.0);
  if (want_grad) {
    std::fill(grad_x.begin(), grad_x.end(), 0.0);
    if (!grad_y.empty()) std::fill(grad_y.begin(), grad_y.end(), 0.0);
  }

  if (kernel.is_separable()) {
    std::vector<double> mx, gx, my{1.0}, gy{0.0};
    separable_axis(kernel, 0, atom.x, grid.nx(), [&](int i) { return grid.bin(i, 0); }, mx, gx, want_grad);
    if (grid.dimension() == 2) {
      separable_axis(kernel, 1, atom.y, grid.ny(), [&](int i) { return grid.bin(0, i); }, my, gy, want_grad);
    }
    for (int iy = 0; iy < grid.ny(); ++iy) {
      if (my[iy] == 0.0 && (!want_grad || gy[iy] == 0.0)) continue;
      for (int ix = 0; ix < grid.nx(); ++ix) {
        const std::size_t i = grid.index(ix, iy);
        mass[i] = mx[ix] * my[iy];
        if (want_grad) {
          grad_x[i] = gx[ix] * my[iy];
          if (grid.dimension() == 2) grad_y[i] = mx[ix] * gy[iy];
        }
      }
    }
    return;
  }

  const Box sup = kernel.support();
  const double h = 1e-6 * kernel.length_scale();
  const Box& w = grid.window();
  const IndexRange cols = covering_bins(w.x0, grid.dx(), grid.nx(), atom.x + sup.x0 - h, atom.x + sup.x1 + h);
  const IndexRange rows = grid.dimension() == 2
                              ? covering_bins(w.y0, grid.dy(), grid.ny(), atom.y + sup.y0 - h, atom.y + sup.y1 + h)
                              : IndexRange{0, 0};
  for (int iy = rows.lo; iy <= rows.hi; ++iy) {
    for (int ix = cols.lo; ix <= cols.hi; ++ix) {
      const std::size_t i = grid.index(ix, iy);
      const Box b = grid.bin(ix, iy);
      mass[i] = atom_bin_mass(kernel, atom, b);
      if (!want_grad) continue;
      grad_x[i] = (atom_bin_mass(kernel, {atom.x + h, atom.y}, b) - atom_bin_mass(kernel, {atom.x - h, atom.y}, b)) /
                  (2.0 * h);
      if (grid.dimension() == 2) {
        grad_y[i] = (atom_bin_mass(kernel, {atom.x, atom.y + h}, b) -
                     atom_bin_mass(kernel, {atom.x, atom.y - h}, b)) /
                    (2.0 * h);
      }
    }
  }
}

std::vector<double> intensities(const Kernel& kernel, const AtomicUniformMeasure& mu, const BinGrid& grid) {
  if (kernel.dimension() != grid.dimension() || mu.dimension() != grid.dimension()) {
    throw UsageError("intensities: kernel, measure and grid dimensions differ");
  }
  std::vector<double> lambda(grid.size(), 0.0);
  std::vector<double> mass(grid.size());
  for (const Point& p : mu.atoms()) {
    atom_footprint(kernel, grid, p, mass);
    for (std::size_t i = 0; i < lambda.size(); ++i) lambda[i] += mass[i];
  }
  const double k = static_cast<double>(mu.size());
  for (double& l : lambda) l /= k;
  return lambda;
}

CountImage simulate(const Kernel& kernel, const AtomicUniformMeasure& mu, const BinGrid& grid, double t,
                    std::uint64_t seed, std::uint64_t stream) {
  if (!(t > 0.0) || !std::isfinite(t)) throw UsageError("simulate: t must be positive and finite");
  const auto lambda = intensities(kernel, mu, grid);
  CounterRng rng(derive_seed(seed, stream));
  std::vector<double> counts(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) counts[i] = static_cast<double>(sample_poisson(rng, t * lambda[i]));
  return CountImage(grid, std::move(counts), t);
}

CountImage noiseless(const Kernel& kernel, const AtomicUniformMeasure& mu, const BinGrid& grid) {
  return CountImage(grid, intensities(kernel, mu, grid), kInfinity);
}

ImagePaths ImagePaths::from(const std::filesystem::path& any) {
  ImagePaths p;
  p.csv = any;
  p.json = any;
  p.csv.replace_extension(".csv");
  p.json.replace_extension(".json");
  return p;
}

CountImage load_image(const std::filesystem::path& path) {
  const ImagePaths paths = ImagePaths::from(path);
  std::ifstream meta_in(paths.json);
  if (!meta_in) throw MetadataError("cannot open image metadata " + paths.json.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw MetadataError("malformed image metadata " + paths.json.string() + ": " + e.what());
  }
  int width = 0, height = 0, dimension = 2;
  double pixel = 0.0;
  Point origin;
  try {
    width = meta.at("width_px").get<int>();
    height = meta.at("height_px").get<int>();
    pixel = meta.at("pixel_size").get<double>();
    if (meta.contains("dimension")) dimension = meta.at("dimension").get<int>();
    if (meta.contains("origin")) {
      origin.x = meta.at("origin").at(0).get<double>();
      if (meta.at("origin").size() > 1) origin.y = meta.at("origin").at(1).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw MetadataError("image metadata " + paths.json.string() + ": " + e.what());
  }
  if (width < 1 || height < 1 || !(pixel > 0.0) || (dimension != 1 && dimension != 2) ||
      (dimension == 1 && height != 1)) {
    throw MetadataError("image metadata " + paths.json.string() + ": invalid resolution, pixel size or dimension");
  }

  std::ifstream in(paths.csv);
  if (!in) throw ImageDimensionError("cannot open image counts " + paths.csv.string());
  std::vector<double> counts;
  counts.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  std::string line;
  int row = 0;
  bool integral = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= height) throw ImageDimensionError("image has more than height_px = " + std::to_string(height) + " rows");
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto* first = cell.data();
      const auto* last = cell.data() + cell.size();
      while (first != last && *first == ' ') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw ImageDimensionError("image entry at row " + std::to_string(row + 1) + ", column " + std::to_string(col + 1) +
                                  " is not a number");
      }
      if (v < 0.0) {
        throw NegativeCountError("negative count at row " + std::to_string(row + 1) + ", column " + std::to_string(col + 1));
      }
      integral = integral && v == std::floor(v);
      counts.push_back(v);
      ++col;
    }
    if (col != width) {
      throw ImageDimensionError("row " + std::to_string(row) + " has " + std::to_string(col) +
                                " entries, expected width_px = " + std::to_string(width));
    }
    ++row;
  }
  if (row != height) {
    throw ImageDimensionError("image has " + std::to_string(row) + " rows, expected height_px = " +
                              std::to_string(height));
  }

  double t = 0.0;
  if (!meta.contains("t") || meta.at("t").is_null()) {
    t = std::accumulate(counts.begin(), counts.end(), 0.0);
    spdlog::warn("image metadata has no exposure t; using the total count {}", t);
    if (!(t > 0.0)) throw MetadataError("image has no exposure t and zero total count");
  } else if (meta.at("t").is_string()) {
    if (meta.at("t").get<std::string>() != "inf") throw MetadataError("exposure t must be a number or \"inf\"");
    t = kInfinity;
  } else {
    t = meta.at("t").get<double>();
    if (!(t > 0.0)) throw MetadataError("exposure t must be positive");
  }
  if (std::isfinite(t) && !integral) throw MetadataError("finite-exposure images must hold integer counts");

  const Box window{origin.x, origin.x + width * pixel, dimension == 2 ? origin.y : 0.0,
                   dimension == 2 ? origin.y + height * pixel : 0.0};
  return CountImage(BinGrid(dimension, window, width, height), std::move(counts), t);
}

void save_image(const CountImage& image, const ImagePaths& paths, const std::string& units) {
  const BinGrid& g = image.grid();
  if (g.dimension() == 2 && std::abs(g.dx() - g.dy()) > 1e-12 * std::max(g.dx(), g.dy())) {
    throw UsageError("save_image: the image format requires square pixels");
  }
  const bool as_integers = !image.noiseless() && image.is_integral();
  std::ofstream out(paths.csv, std::ios::binary);
  if (!out) throw FormatError("cannot write " + paths.csv.string());
  char buf[64];
  for (int iy = 0; iy < g.ny(); ++iy) {
    for (int ix = 0; ix < g.nx(); ++ix) {
      if (ix > 0) out << ',';
      const double v = image.counts()[g.index(ix, iy)];
      std::to_chars_result r{};
      if (as_integers) {
        r = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(v));
      } else {
        r = std::to_chars(buf, buf + sizeof(buf), v);
      }
      out.write(buf, r.ptr - buf);
    }
    out << '\n';
  }

  nlohmann::ordered_json meta;
  meta["width_px"] = g.nx();
  meta["height_px"] = g.ny();
  meta["pixel_size"] = g.dx();
  meta["units"] = units;
  if (image.noiseless()) {
    meta["t"] = "inf";
  } else {
    meta["t"] = image.exposure();
  }
  meta["origin"] = g.dimension() == 2 ? nlohmann::json::array({g.window().x0, g.window().y0})
                                      : nlohmann::json::array({g.window().x0});
  meta["dimension"] = g.dimension();
  std::ofstream mo(paths.json, std::ios::binary);
  if (!mo) throw FormatError("cannot write " + paths.json.string());
  mo << meta.dump(2) << '\n';
}

}  // namespace pdecon
