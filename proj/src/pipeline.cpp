#include "pdecon/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "pdecon/errors.hpp"
#include "pdecon/mm.hpp"
#include "pdecon/parallel.hpp"

namespace pdecon {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  // The smaller root wins so component labels are deterministic.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

void write_number(std::ostream& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

// The cell holds a share r of the total intensity; rescaling the exposure
// (or the noiseless intensities) makes the crop an image of a probability
// measure with k_P atoms.
CountImage as_cell_image(const CountImage& crop, double ratio) {
  if (crop.noiseless()) {
    std::vector<double> c(crop.counts().begin(), crop.counts().end());
    for (double& v : c) v /= ratio;
    return CountImage(crop.grid(), std::move(c), kInfinity);
  }
  return CountImage(crop.grid(), std::vector<double>(crop.counts().begin(), crop.counts().end()),
                    crop.exposure() * ratio);
}

}  // namespace

void PartitionConfig::validate() const {
  if (mode_count < 1) throw UsageError("pipeline: mode_count must be >= 1");
  if (!(mode_half_width > 0.0)) throw UsageError("pipeline: mode_half_width must be positive");
  if (!(link_threshold > 0.0)) throw UsageError("pipeline: link_threshold must be positive");
  if (components < 2) throw UsageError("pipeline: components must be >= 2");
  if (!(pixel_size > 0.0)) throw UsageError("pipeline: pixel_size must be positive");
}

ModeSelection mode_selection(const CountImage& image, const Kernel& mode_kernel, int mode_count) {
  if (mode_count < 1) throw UsageError("mode_selection: mode count must be >= 1");
  const BinGrid& grid = image.grid();
  if (mode_kernel.dimension() != grid.dimension()) {
    throw UsageError("mode_selection: kernel and image dimensions differ");
  }
  std::vector<double> x(image.counts().begin(), image.counts().end());
  std::vector<double> spike(grid.size());
  ModeSelection out{{}, image, false};
  for (int n = 0; n < mode_count; ++n) {
    const auto peak = std::max_element(x.begin(), x.end());  // first maximum on ties
    if (*peak <= 0.0) {
      out.exhausted = true;
      break;
    }
    const std::size_t j = static_cast<std::size_t>(peak - x.begin());
    const Point theta = grid.anchor(j);
    out.modes.push_back(theta);
    atom_footprint(mode_kernel, grid, theta, spike);
    const double top = *std::max_element(spike.begin(), spike.end());
    if (!(top > 0.0)) throw NumericalError("mode_selection: mode kernel puts no mass on the grid");
    const double scale = x[j] / top;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (spike[i] != 0.0) x[i] = std::max(x[i] - scale * spike[i], 0.0);
    }
    // Exact at the peak regardless of rounding in the spike.
    if (spike[j] == top) x[j] = 0.0;
  }
  out.residual = CountImage(grid, std::move(x), image.exposure());
  return out;
}

std::vector<Cell> partition(const std::vector<Point>& modes, const BinGrid& grid, double link_threshold) {
  if (modes.empty()) throw UsageError("partition: need at least one mode");
  if (!(link_threshold > 0.0)) throw UsageError("partition: link threshold must be positive");
  DisjointSets sets(modes.size());
  for (std::size_t a = 0; a < modes.size(); ++a)
    for (std::size_t b = a + 1; b < modes.size(); ++b)
      if (distance(modes[a], modes[b]) < link_threshold) sets.unite(a, b);

  std::vector<std::size_t> label(modes.size());
  std::vector<std::size_t> cell_of_root(modes.size(), modes.size());
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < modes.size(); ++a) {
    const std::size_t r = sets.find(a);
    if (cell_of_root[r] == modes.size()) {
      cell_of_root[r] = cells.size();
      cells.emplace_back();
    }
    label[a] = cell_of_root[r];
    cells[label[a]].modes.push_back(a);
  }

  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point p = grid.anchor(i);
    std::size_t best = 0;
    double best_d = distance(p, modes[0]);
    for (std::size_t a = 1; a < modes.size(); ++a) {
      const double d = distance(p, modes[a]);
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    cells[label[best]].pixels.push_back(i);
  }
  return cells;
}

CountImage denoise(const CountImage& image, const CountImage& residual) {
  if (residual.grid().size() != image.grid().size()) throw UsageError("denoise: residual is not aligned with image");
  std::vector<double> c(image.grid().size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::max(image.counts()[i] - residual.counts()[i], 0.0);
  return CountImage(image.grid(), std::move(c), image.exposure());
}

int even_round(double x) { return 2 * static_cast<int>(std::floor(x / 2.0 + 0.5)); }

std::vector<Allocation> allocate_components(const std::vector<Cell>& cells, const CountImage& denoised, int k) {
  if (k < 2) throw UsageError("allocate_components: k must be >= 2");
  const double total = denoised.total();
  std::vector<Allocation> out(cells.size());
  if (!(total > 0.0)) return out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    double mass = 0.0;
    for (std::size_t i : cells[c].pixels) mass += denoised.counts()[i];
    out[c].ratio = mass / total;
    out[c].components = even_round(out[c].ratio * k);
  }
  return out;
}

CroppedCell denoise_and_crop(const CountImage& image, const CountImage& residual, const Cell& cell) {
  const BinGrid& grid = image.grid();
  if (residual.grid().size() != grid.size()) throw UsageError("denoise_and_crop: residual is not aligned with image");
  int x_lo = grid.nx(), x_hi = -1, y_lo = grid.ny(), y_hi = -1;
  std::vector<std::pair<std::size_t, double>> kept;
  for (std::size_t i : cell.pixels) {
    const double v = std::max(image.counts()[i] - residual.counts()[i], 0.0);
    if (v <= 0.0) continue;
    kept.emplace_back(i, v);
    const int ix = static_cast<int>(i % static_cast<std::size_t>(grid.nx()));
    const int iy = static_cast<int>(i / static_cast<std::size_t>(grid.nx()));
    x_lo = std::min(x_lo, ix);
    x_hi = std::max(x_hi, ix);
    y_lo = std::min(y_lo, iy);
    y_hi = std::max(y_hi, iy);
  }
  CroppedCell out;
  if (kept.empty()) return out;
  const int nx = x_hi - x_lo + 1, ny = y_hi - y_lo + 1;
  BinGrid sub = grid.subgrid(x_lo, y_lo, nx, ny);
  std::vector<double> c(sub.size(), 0.0);
  for (const auto& [i, v] : kept) {
    const int ix = static_cast<int>(i % static_cast<std::size_t>(grid.nx())) - x_lo;
    const int iy = static_cast<int>(i / static_cast<std::size_t>(grid.nx())) - y_lo;
    c[sub.index(ix, iy)] = v;
  }
  out.image = CountImage(std::move(sub), std::move(c), image.exposure());
  out.ix0 = x_lo;
  out.iy0 = y_lo;
  return out;
}

PipelineResult run_pipeline(const CountImage& image, const Kernel& kernel, const PartitionConfig& config) {
  config.validate();
  if (image.grid().dimension() != 2 || kernel.dimension() != 2) {
    throw UsageError("run_pipeline: images and kernels must be two-dimensional");
  }
  const Kernel box = Kernel::uniform_box(2, config.mode_half_width);
  ModeSelection sel = mode_selection(image, box, config.mode_count);
  PipelineResult result{sel.modes, sel.exhausted, sel.residual, {}, std::nullopt};
  if (sel.modes.empty()) {
    spdlog::warn("pipeline: image has no positive counts");
    return result;
  }
  if (sel.exhausted) spdlog::info("pipeline: residual exhausted after {} modes", sel.modes.size());

  const std::vector<Cell> cells = partition(sel.modes, image.grid(), config.link_threshold);
  const CountImage clean = denoise(image, sel.residual);
  const std::vector<Allocation> alloc = allocate_components(cells, clean, config.components);

  result.cells.resize(cells.size());
  parallel_for(cells.size(), config.jobs, [&](std::size_t c) {
    CellResult& out = result.cells[c];
    out.id = c;
    out.cell = cells[c];
    out.ratio = alloc[c].ratio;
    out.components = alloc[c].components;
    const CroppedCell crop = denoise_and_crop(image, sel.residual, cells[c]);
    if (!crop.image) {
      out.flags.emplace_back("empty_cell");
      return;
    }
    out.ix0 = crop.ix0;
    out.iy0 = crop.iy0;
    out.nx = crop.image->grid().nx();
    out.ny = crop.image->grid().ny();
    if (out.components == 0) return;
    try {
      const CountImage cell_image = as_cell_image(*crop.image, out.ratio);
      const MmEstimate init = mm_complex(cell_image, kernel, out.components);
      for (const auto& f : init.diagnostics.flags) out.flags.push_back("mm_" + f);
      EmConfig em = config.em;
      em.domain.reset();
      const EmResult fit = run_em(cell_image, kernel, init.measure, em);
      out.estimate = fit.measure;
      out.em_iterations = static_cast<int>(fit.trace.iterations.size());
      out.em_log_likelihood = fit.trace.iterations.empty() ? fit.trace.initial_log_likelihood
                                                           : fit.trace.iterations.back().log_likelihood;
      out.em_monotone = fit.trace.monotone();
      out.em_collision = fit.trace.collision;
      if (fit.trace.init_clipped) out.flags.emplace_back("init_clipped");
      if (fit.trace.collision) out.flags.emplace_back("collision");
    } catch (const std::exception& e) {
      spdlog::warn("pipeline: cell {} failed: {}", c, e.what());
      out.estimate.reset();
      out.flags.emplace_back(std::string("failed: ") + e.what());
    }
  });

  std::vector<Point> atoms;
  for (const auto& cell : result.cells)
    if (cell.estimate) atoms.insert(atoms.end(), cell.estimate->atoms().begin(), cell.estimate->atoms().end());
  if (!atoms.empty()) result.merged = AtomicUniformMeasure(2, std::move(atoms));
  return result;
}

std::vector<std::pair<std::size_t, std::size_t>> run_length_encode(const std::vector<std::size_t>& pixels) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i : pixels) {
    if (!runs.empty() && runs.back().first + runs.back().second == i) {
      ++runs.back().second;
    } else {
      runs.emplace_back(i, 1);
    }
  }
  return runs;
}

void to_json(nlohmann::json& j, const CellResult& cell) {
  j = nlohmann::json::object();
  j["id"] = cell.id;
  j["modes"] = cell.cell.modes;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& [start, len] : run_length_encode(cell.cell.pixels)) runs.push_back({start, len});
  j["mask_rle"] = std::move(runs);
  j["ratio"] = cell.ratio;
  j["k"] = cell.components;
  j["crop"] = {cell.ix0, cell.iy0, cell.nx, cell.ny};
  if (cell.estimate) {
    j["estimate"] = *cell.estimate;
  } else {
    j["estimate"] = nullptr;
  }
  j["em"] = {{"iterations", cell.em_iterations},
             {"loglik", cell.em_log_likelihood},
             {"monotone", cell.em_monotone},
             {"collision", cell.em_collision}};
  j["flags"] = cell.flags;
}

void write_pipeline_outputs(const PipelineResult& result, const BinGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json cells;
  cells["grid"] = {{"nx", grid.nx()}, {"ny", grid.ny()}};
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : result.modes) modes.push_back({m.x, m.y});
  cells["modes"] = std::move(modes);
  cells["modes_exhausted"] = result.modes_exhausted;
  cells["cells"] = result.cells;
  std::ofstream(dir / "cells.json") << cells.dump(2) << '\n';

  nlohmann::json est;
  if (result.merged) {
    est = *result.merged;
  } else {
    est = {{"dimension", 2}, {"atoms", nlohmann::json::array()}};
  }
  std::ofstream(dir / "estimate.json") << est.dump(2) << '\n';

  std::ofstream res(dir / "residual.csv");
  const auto c = result.residual.counts();
  for (int iy = 0; iy < grid.ny(); ++iy) {
    for (int ix = 0; ix < grid.nx(); ++ix) {
      if (ix) res << ',';
      write_number(res, c[grid.index(ix, iy)]);
    }
    res << '\n';
  }
  if (!res) throw std::runtime_error("pipeline: failed writing residual.csv");
}

}  // namespace pdecon
