#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "pdecon/em.hpp"
#include "pdecon/errors.hpp"
#include "pdecon/mm.hpp"
#include "pdecon/pipeline.hpp"

using namespace pdecon;
namespace fs = std::filesystem;

namespace {

CountImage make_image(const BinGrid& g, std::vector<double> counts, double t = 100.0) {
  return CountImage(g, std::move(counts), t);
}

std::vector<Point> sorted_atoms(const AtomicUniformMeasure& mu) {
  std::vector<Point> v(mu.atoms().begin(), mu.atoms().end());
  std::sort(v.begin(), v.end(), [](const Point& a, const Point& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  return v;
}

// Two-atom clusters 71 apart at a few well-separated centers, nm units.
AtomicUniformMeasure clusters(const std::vector<Point>& centers) {
  std::vector<Point> atoms;
  for (const Point& c : centers) {
    atoms.push_back({c.x - 35.5, c.y});
    atoms.push_back({c.x + 35.5, c.y});
  }
  return AtomicUniformMeasure(2, atoms);
}

}  // namespace

TEST_CASE("mode selection") {
  const BinGrid g = BinGrid::square({0, 10, 0, 10}, 10);
  std::vector<double> c(g.size(), 0.0);
  c[g.index(4, 6)] = 50;
  const Kernel box = Kernel::uniform_box(2, 1.5);
  const ModeSelection one = mode_selection(make_image(g, c), box, 1);
  REQUIRE(one.modes.size() == 1);
  CHECK(one.modes[0].x == g.anchor(g.index(4, 6)).x);
  CHECK(one.modes[0].y == g.anchor(g.index(4, 6)).y);
  CHECK(one.residual.counts()[g.index(4, 6)] == 0.0);
  CHECK(!one.exhausted);

  // Equal maxima: the lower row-major index wins.
  c[g.index(1, 2)] = 50;
  const ModeSelection tie = mode_selection(make_image(g, c), box, 1);
  CHECK(tie.modes[0].x == g.anchor(g.index(1, 2)).x);
  CHECK(tie.modes[0].y == g.anchor(g.index(1, 2)).y);

  const ModeSelection more = mode_selection(make_image(g, c), box, 10);
  CHECK(more.exhausted);
  CHECK(more.modes.size() == 2);

  const ModeSelection none = mode_selection(make_image(g, std::vector<double>(g.size(), 0.0)), box, 3);
  CHECK(none.modes.empty());
  CHECK(none.exhausted);
}

TEST_CASE("mode selection residual bounds") {
  const BinGrid g(2, {0, 600, 0, 600}, 60, 60);
  const Kernel psf = Kernel::isotropic_gaussian(2, 42);
  const CountImage img = simulate(psf, clusters({{150, 150}, {420, 400}}), g, 2e4, 3);
  const Kernel box = Kernel::uniform_box(2, 180);
  double prev = img.total();
  for (int n = 1; n <= 8; ++n) {
    const ModeSelection s = mode_selection(img, box, n);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(s.residual.counts()[i] >= 0.0);
      CHECK(s.residual.counts()[i] <= img.counts()[i]);
    }
    CHECK(s.residual.total() <= prev);
    prev = s.residual.total();
  }
}

TEST_CASE("partition") {
  const BinGrid g = BinGrid::square({0, 100, 0, 100}, 20);
  const std::vector<Point> far{{10, 10}, {90, 10}, {50, 90}};
  const auto cells = partition(far, g, 30);
  REQUIRE(cells.size() == 3);
  std::vector<int> seen(g.size(), 0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CHECK(cells[c].modes == std::vector<std::size_t>{c});
    CHECK(std::is_sorted(cells[c].pixels.begin(), cells[c].pixels.end()));
    for (std::size_t p : cells[c].pixels) ++seen[p];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  // Pixel anchors nearest each mode.
  CHECK(std::count(cells[0].pixels.begin(), cells[0].pixels.end(), g.index(0, 0)) == 1);
  CHECK(std::count(cells[2].pixels.begin(), cells[2].pixels.end(), g.index(10, 19)) == 1);

  const std::vector<Point> chain{{10, 50}, {35, 50}, {60, 50}, {85, 50}};
  const auto one = partition(chain, g, 30);
  REQUIRE(one.size() == 1);
  CHECK(one[0].pixels.size() == g.size());
  CHECK(one[0].modes.size() == 4);

  // Two components out of three modes.
  const auto two = partition({{10, 10}, {80, 80}, {30, 10}}, g, 30);
  REQUIRE(two.size() == 2);
  CHECK(two[0].modes == std::vector<std::size_t>{0, 2});
  CHECK(two[1].modes == std::vector<std::size_t>{1});
  CHECK(two[0].pixels.size() + two[1].pixels.size() == g.size());
}

TEST_CASE("component allocation") {
  CHECK(even_round(3.0) == 4);
  CHECK(even_round(2.9) == 2);
  CHECK(even_round(1.0) == 2);
  CHECK(even_round(0.99) == 0);
  CHECK(even_round(5.0) == 6);
  CHECK(even_round(0.0) == 0);

  const BinGrid g2(2, {0, 2, 0, 1}, 2, 1);
  const CountImage img(g2, {5, 5}, 10);
  const std::vector<Cell> cells{{{0}, {0}}, {{1}, {1}}};
  const auto a = allocate_components(cells, img, 4);
  CHECK(a[0].components == 2);
  CHECK(a[1].components == 2);
  CHECK(a[0].ratio == 0.5);

  const CountImage skew(g2, {3, 1}, 4);
  const auto b = allocate_components(cells, skew, 4);
  CHECK(b[0].components == 4);
  CHECK(b[1].components == 2);
  CHECK(b[0].components + b[1].components != 4);
}

TEST_CASE("denoise and crop") {
  const BinGrid g = BinGrid::square({0, 5, 0, 5}, 5);
  std::vector<double> c(g.size(), 0.0);
  c[g.index(1, 2)] = 4;
  c[g.index(3, 3)] = 2;
  c[g.index(4, 0)] = 7;
  const CountImage img(g, c, 13);
  Cell all;
  for (std::size_t i = 0; i < g.size(); ++i) all.pixels.push_back(i);
  Cell left;
  for (int iy = 0; iy < 5; ++iy)
    for (int ix = 0; ix < 4; ++ix) left.pixels.push_back(g.index(ix, iy));
  std::sort(left.pixels.begin(), left.pixels.end());

  const CountImage zero(g, std::vector<double>(g.size(), 0.0), 13);
  const CroppedCell cc = denoise_and_crop(img, zero, left);
  REQUIRE(cc.image);
  CHECK(cc.ix0 == 1);
  CHECK(cc.iy0 == 2);
  CHECK(cc.image->grid().nx() == 3);
  CHECK(cc.image->grid().ny() == 2);
  CHECK(cc.image->total() == 6);
  CHECK(cc.image->grid().window().x0 == 1.0);
  CHECK(cc.image->grid().window().y1 == 4.0);
  CHECK(cc.image->counts()[cc.image->grid().index(0, 0)] == 4);

  const CroppedCell whole = denoise_and_crop(img, zero, all);
  REQUIRE(whole.image);
  CHECK(whole.image->total() == img.total());

  CHECK(!denoise_and_crop(img, img, all).image);

  std::vector<double> r(g.size(), 0.0);
  r[g.index(1, 2)] = 5;
  r[g.index(3, 3)] = 1;
  const CountImage dn = denoise(img, CountImage(g, r, 13));
  CHECK(dn.counts()[g.index(1, 2)] == 0);
  CHECK(dn.counts()[g.index(3, 3)] == 1);
}

TEST_CASE("run-length encoding") {
  using Runs = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(run_length_encode({}) == Runs{});
  CHECK(run_length_encode({3}) == Runs{{3, 1}});
  CHECK(run_length_encode({0, 1, 2, 5, 6, 9}) == Runs{{0, 3}, {5, 2}, {9, 1}});
}

TEST_CASE("config validation") {
  PartitionConfig c;
  CHECK_NOTHROW(c.validate());
  c.components = 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.mode_count = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.link_threshold = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("a single cluster matches direct estimation") {
  const BinGrid g(2, {0, 600, 0, 600}, 60, 60);
  const Kernel psf = Kernel::isotropic_gaussian(2, 42);
  const CountImage img = simulate(psf, clusters({{300, 300}}), g, 1e4, 5);
  PartitionConfig cfg;
  cfg.mode_count = 6;
  cfg.components = 2;
  const PipelineResult res = run_pipeline(img, psf, cfg);
  REQUIRE(res.cells.size() == 1);
  REQUIRE(res.merged);
  CHECK(res.cells[0].components == 2);
  CHECK(res.cells[0].ratio == 1.0);

  const CroppedCell crop = denoise_and_crop(img, res.residual, res.cells[0].cell);
  REQUIRE(crop.image);
  const EmResult direct = run_em(*crop.image, psf, mm_complex(*crop.image, psf, 2).measure, cfg.em);
  CHECK(wasserstein(direct.measure, *res.merged, kInfinity) == 0.0);
  CHECK(wasserstein(*res.merged, clusters({{300, 300}}), 1) < 15.0);
}

TEST_CASE("pipeline is deterministic and order invariant") {
  const BinGrid g(2, {0, 1500, 0, 1000}, 150, 100);
  const Kernel psf = Kernel::isotropic_gaussian(2, 42);
  const AtomicUniformMeasure truth = clusters({{300, 300}, {1100, 250}, {700, 750}});
  const CountImage img = simulate(psf, truth, g, 3e4, 8);
  PartitionConfig cfg;
  cfg.mode_count = 12;
  cfg.components = 6;
  const PipelineResult a = run_pipeline(img, psf, cfg);
  const PipelineResult b = run_pipeline(img, psf, cfg);
  cfg.jobs = 3;
  const PipelineResult c = run_pipeline(img, psf, cfg);
  REQUIRE(a.merged);
  REQUIRE(b.merged);
  REQUIRE(c.merged);
  const auto sa = sorted_atoms(*a.merged);
  const auto sb = sorted_atoms(*b.merged);
  const auto sc = sorted_atoms(*c.merged);
  REQUIRE(sa.size() == sc.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].x == sb[i].x);
    CHECK(sa[i].y == sb[i].y);
    CHECK(sa[i].x == sc[i].x);
    CHECK(sa[i].y == sc[i].y);
  }
  CHECK(a.cells.size() >= 3);

  // Partition covers the window; estimates stay in their crop box inflated by 3 sigma.
  std::vector<int> seen(g.size(), 0);
  for (const CellResult& cell : a.cells) {
    for (std::size_t p : cell.cell.pixels) ++seen[p];
    CHECK(cell.components % 2 == 0);
    if (!cell.estimate) continue;
    CHECK(cell.estimate->size() == static_cast<std::size_t>(cell.components));
    CHECK(cell.em_monotone);
    const Box box{g.bin(cell.ix0, 0).x0 - 126, g.bin(cell.ix0 + cell.nx - 1, 0).x1 + 126,
                  g.bin(0, cell.iy0).y0 - 126, g.bin(0, cell.iy0 + cell.ny - 1).y1 + 126};
    for (const Point& p : cell.estimate->atoms()) CHECK(box.contains(p));
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

  // Every true cluster center has an estimated atom pair center nearby.
  for (std::size_t j = 0; j < truth.size(); j += 2) {
    const Point center{(truth[j].x + truth[j + 1].x) / 2, (truth[j].y + truth[j + 1].y) / 2};
    double best = 1e300;
    for (const Point& p : a.merged->atoms()) best = std::min(best, distance(p, center));
    CHECK(best < 60.0);
  }
}

TEST_CASE("pipeline outputs") {
  const BinGrid g(2, {0, 600, 0, 600}, 60, 60);
  const Kernel psf = Kernel::isotropic_gaussian(2, 42);
  const CountImage img = simulate(psf, clusters({{300, 300}}), g, 1e4, 5);
  PartitionConfig cfg;
  cfg.mode_count = 4;
  cfg.components = 2;
  const PipelineResult res = run_pipeline(img, psf, cfg);
  const fs::path dir = fs::temp_directory_path() / "pdecon_pipeline_out";
  fs::remove_all(dir);
  write_pipeline_outputs(res, g, dir);
  for (const char* f : {"cells.json", "estimate.json", "residual.csv"}) CHECK(fs::exists(dir / f));
  std::ifstream in(dir / "cells.json");
  const auto j = nlohmann::json::parse(in);
  REQUIRE(j["cells"].size() == res.cells.size());
  CHECK(j["cells"][0]["k"] == 2);
  CHECK(j["cells"][0]["mask_rle"][0][0] == 0);
  CHECK(j["cells"][0]["mask_rle"][0][1] == g.size());
  CHECK(j["modes"].size() == res.modes.size());
  fs::remove_all(dir);
}
