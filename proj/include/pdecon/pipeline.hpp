#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdecon/em.hpp"
#include "pdecon/kernels.hpp"
#include "pdecon/measures.hpp"
#include "pdecon/observation.hpp"

namespace pdecon {

struct PartitionConfig {
  /// k-tilde
  int mode_count = 39;
  /// Half-width of the uniform box kernel used for mode selection.
  double mode_half_width = 180.0;
  double link_threshold = 270.0;
  /// Total number of components k.
  int components = 20;
  /// Physical size of one pixel; informational, the grid already carries it.
  double pixel_size = 1.0;
  EmConfig em;
  int jobs = 1;

  void validate() const;
};

struct ModeSelection {
  std::vector<Point> modes;
  CountImage residual;
  /// Residual became all zero before mode_count modes were placed.
  bool exhausted = false;
};

/// Greedy peak picking: place a mode at the anchor of the brightest residual
/// bin, subtract the blurred spike scaled to cancel that bin, clamp at zero.
/// Ties go to the lowest row-major index.
ModeSelection mode_selection(const CountImage& image, const Kernel& mode_kernel, int mode_count);

struct Cell {
  /// Indices into the mode list.
  std::vector<std::size_t> modes;
  /// Row-major pixel indices of the full grid, ascending.
  std::vector<std::size_t> pixels;
};

/// Voronoi cells of the modes over the bin anchors (ties to the lowest mode
/// index), merged along the graph linking modes closer than link_threshold.
/// Cells are ordered by their lowest mode index.
std::vector<Cell> partition(const std::vector<Point>& modes, const BinGrid& grid, double link_threshold);

/// max(counts - residual, 0) over the whole image.
CountImage denoise(const CountImage& image, const CountImage& residual);

struct Allocation {
  double ratio = 0.0;
  int components = 0;
};

/// k_P = 2 * round_half_up(r_P * k / 2) with r_P the share of denoised mass.
std::vector<Allocation> allocate_components(const std::vector<Cell>& cells, const CountImage& denoised, int k);

/// 2 * round_half_up(x / 2).
int even_round(double x);

struct CroppedCell {
  /// Absent when nothing positive remains in the cell.
  std::optional<CountImage> image;
  int ix0 = 0;
  int iy0 = 0;
};

/// Denoised counts restricted to the cell, cropped to the bounding box of
/// the positive pixels.
CroppedCell denoise_and_crop(const CountImage& image, const CountImage& residual, const Cell& cell);

struct CellResult {
  std::size_t id = 0;
  Cell cell;
  double ratio = 0.0;
  int components = 0;
  std::optional<AtomicUniformMeasure> estimate;
  std::vector<std::string> flags;
  /// Crop window in pixel indices [ix0, ix0 + nx) x [iy0, iy0 + ny).
  int ix0 = 0, iy0 = 0, nx = 0, ny = 0;
  int em_iterations = 0;
  double em_log_likelihood = 0.0;
  bool em_monotone = true;
  bool em_collision = false;
};

struct PipelineResult {
  std::vector<Point> modes;
  bool modes_exhausted = false;
  CountImage residual;
  std::vector<CellResult> cells;
  /// All cell atoms with uniform weights; absent if no cell produced atoms.
  std::optional<AtomicUniformMeasure> merged;
};

PipelineResult run_pipeline(const CountImage& image, const Kernel& kernel, const PartitionConfig& config);

/// Run-length encoding of ascending pixel indices as [start, length] pairs.
std::vector<std::pair<std::size_t, std::size_t>> run_length_encode(const std::vector<std::size_t>& pixels);

/// cells.json, estimate.json and residual.csv under `dir`.
void write_pipeline_outputs(const PipelineResult& result, const BinGrid& grid, const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const CellResult& cell);

}  // namespace pdecon
