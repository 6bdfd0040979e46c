#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pdecon/errors.hpp"
#include "pdecon/observation.hpp"
#include "pdecon/rng.hpp"

using namespace pdecon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("bin grid geometry") {
  const BinGrid g(2, {0, 1, 0, 2}, 4, 5);
  CHECK(g.size() == 20);
  CHECK(g.dx() == 0.25);
  CHECK(g.dy() == 0.4);
  CHECK(g.index(3, 2) == 11);
  const Box b = g.bin(11);
  CHECK(b.x0 == 0.75);
  CHECK(b.x1 == 1.0);
  CHECK(b.y0 == doctest::Approx(0.8));
  // Shared edges are bit-identical so bins tile the window.
  for (int ix = 0; ix + 1 < 4; ++ix) CHECK(g.bin(ix, 0).x1 == g.bin(ix + 1, 0).x0);
  for (int iy = 0; iy + 1 < 5; ++iy) CHECK(g.bin(0, iy).y1 == g.bin(0, iy + 1).y0);
  CHECK(g.bin(3, 4).x1 == 1.0);
  CHECK(g.bin(3, 4).y1 == 2.0);
  CHECK(g.anchor(0).x == 0.125);
  CHECK(g.with_anchor(AnchorRule::LowerLeft).anchor(11).x == 0.75);

  const BinGrid s = g.subgrid(1, 2, 2, 3);
  CHECK(s.window().x0 == 0.25);
  CHECK(s.window().y1 == doctest::Approx(2.0));
  CHECK(s.bin(0, 0).x0 == g.bin(1, 2).x0);
  CHECK_THROWS_AS(g.subgrid(3, 0, 2, 1), UsageError);
  CHECK_THROWS_AS(BinGrid(2, {0, 1, 0, 1}, 0, 3), UsageError);
  CHECK_THROWS_AS(BinGrid(2, {1, 0, 0, 1}, 2, 2), UsageError);
}

TEST_CASE("count image invariants") {
  const BinGrid g = BinGrid::square({0, 1, 0, 1}, 2);
  CHECK_THROWS_AS(CountImage(g, {1, 2, 3}, 10), UsageError);
  CHECK_THROWS_AS(CountImage(g, {1, 2, 3, -1}, 10), UsageError);
  CHECK_THROWS_AS(CountImage(g, {1, 2, 3, 4}, 0), UsageError);
  const CountImage img(g, {1, 2, 3, 4}, 10);
  CHECK(img.total() == 10);
  CHECK(img.weight(3) == doctest::Approx(0.4));
  CHECK(img.likelihood_exposure() == 10);
  const CountImage nl(g, {0.1, 0.2, 0.3, 0.4}, kInfinity);
  CHECK(nl.noiseless());
  CHECK(nl.weight(3) == 0.4);
  CHECK(nl.likelihood_exposure() == 1.0);
}

TEST_CASE("poisson sampler moments") {
  for (double mean : {0.3, 4.0, 9.99, 10.0, 37.5, 1e4, 1e7}) {
    CounterRng rng(derive_seed(1, static_cast<std::uint64_t>(mean * 100)));
    const int n = 20000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(sample_poisson(rng, mean));
      s += x;
      s2 += x * x;
    }
    const double m = s / n;
    const double var = s2 / n - m * m;
    CHECK(std::abs(m - mean) < 5.0 * std::sqrt(mean / n));
    // Var of the sample variance is about 2 mean^2 / n for large means.
    CHECK(std::abs(var - mean) < 5.0 * std::sqrt((2.0 * mean * mean + mean) / n));
  }
  CounterRng rng(4);
  CHECK(sample_poisson(rng, 0.0) == 0);
}

TEST_CASE("simulation is unbiased and deterministic") {
  const Kernel k = Kernel::isotropic_gaussian(2, 0.1);
  const AtomicUniformMeasure mu(2, {{0.4, 0.5}, {0.6, 0.45}});
  const BinGrid g = BinGrid::square({0, 1, 0, 1}, 5);
  const auto lambda = intensities(k, mu, g);
  const double t = 50.0;
  const int reps = 10000;
  std::vector<double> sum(g.size(), 0.0), sum2(g.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    const CountImage img = simulate(k, mu, g, t, 99, r);
    CHECK(img.is_integral());
    for (std::size_t i = 0; i < g.size(); ++i) {
      sum[i] += img.counts()[i];
      sum2[i] += img.counts()[i] * img.counts()[i];
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mean = t * lambda[i];
    if (mean < 1e-3) continue;
    const double m = sum[i] / reps;
    CHECK(std::abs(m / t - lambda[i]) < 4.0 * std::sqrt(mean / reps) / t);
    const double var = sum2[i] / reps - m * m;
    CHECK(std::abs(var - mean) < 5.0 * std::sqrt((2.0 * mean * mean + mean) / reps));
  }

  const CountImage a = simulate(k, mu, g, 1e3, 7);
  const CountImage b = simulate(k, mu, g, 1e3, 7);
  const CountImage c = simulate(k, mu, g, 1e3, 8);
  CHECK(std::equal(a.counts().begin(), a.counts().end(), b.counts().begin()));
  CHECK(!std::equal(a.counts().begin(), a.counts().end(), c.counts().begin()));
}

TEST_CASE("noiseless image") {
  const Kernel k = Kernel::isotropic_gaussian(2, 0.05);
  const BinGrid g = BinGrid::square({0, 1, 0, 1}, 40);
  const AtomicUniformMeasure centered(2, {{0.5, 0.5}});
  const CountImage nl = noiseless(k, centered, g);
  CHECK(nl.noiseless());
  CHECK(nl.total() == doctest::Approx(1.0).epsilon(1e-12));
  for (int iy = 0; iy < 40; ++iy)
    for (int ix = 0; ix < 40; ++ix) {
      const double v = nl.counts()[g.index(ix, iy)];
      CHECK(std::abs(v - nl.counts()[g.index(39 - ix, iy)]) <= 1e-12 * v + 1e-300);
      CHECK(std::abs(v - nl.counts()[g.index(iy, ix)]) <= 1e-12 * v + 1e-300);
    }

  // Fine grid: per-bin error within 5 Poisson standard deviations.
  const AtomicUniformMeasure mu(2, {{0.3, 0.4}, {0.7, 0.6}});
  const CountImage exact = noiseless(k, mu, g);
  const double t = 1e8;
  const CountImage big = simulate(k, mu, g, t, 123);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double lambda = exact.counts()[i];
    if (lambda <= 1e-3) continue;
    CHECK(std::abs(big.counts()[i] / t - lambda) < 5.0 * std::sqrt(lambda / t));
  }

  // Coarse grid: every bin holds enough mass for a 1e-3 relative error.
  const BinGrid coarse = BinGrid::square({0, 1, 0, 1}, 2);
  const Kernel wide = Kernel::isotropic_gaussian(2, 0.3);
  const CountImage exact2 = noiseless(wide, mu, coarse);
  const CountImage big2 = simulate(wide, mu, coarse, t, 321);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const double lambda = exact2.counts()[i];
    REQUIRE(lambda > 0.1);
    CHECK(std::abs(big2.counts()[i] / t - lambda) < 1e-3 * lambda);
  }
}

TEST_CASE("averaged simulations converge to the noiseless image") {
  const Kernel k = Kernel::isotropic_gaussian(1, 0.1);
  const AtomicUniformMeasure mu(1, {{0.3, 0}, {0.6, 0}});
  const BinGrid g = BinGrid::line(0, 1, 20);
  const CountImage exact = noiseless(k, mu, g);
  const double t = 1e3;
  const int reps = 400;
  std::vector<double> avg(g.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    const CountImage img = simulate(k, mu, g, t, 5, r);
    for (std::size_t i = 0; i < g.size(); ++i) avg[i] += img.counts()[i] / t / reps;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double lambda = exact.counts()[i];
    CHECK(std::abs(avg[i] - lambda) <= 3.0 * std::sqrt(lambda / (reps * t)) + 1e-12);
  }
}

TEST_CASE("image files round trip") {
  TempDir dir("pdecon_obs_io");
  const BinGrid g(2, {0, 6000, 0, 6000}, 600, 600);
  const Kernel k = Kernel::isotropic_gaussian(2, 42);
  const CountImage img = simulate(k, AtomicUniformMeasure(2, {{3000, 3000}}), g, 1e4, 1);
  save_image(img, ImagePaths::from(dir.path / "image.csv"), "nm");
  const std::string csv = slurp(dir.path / "image.csv");
  CHECK(csv.find('e') == std::string::npos);
  CHECK(csv.find('.') == std::string::npos);
  const CountImage back = load_image(dir.path / "image.json");
  CHECK(back.grid().window().x1 == 6000);
  CHECK(back.grid().window().y1 == 6000);
  CHECK(back.exposure() == 1e4);
  CHECK(std::equal(img.counts().begin(), img.counts().end(), back.counts().begin()));

  const CountImage nl = noiseless(Kernel::isotropic_gaussian(2, 0.1), AtomicUniformMeasure(2, {{0.5, 0.5}}),
                                  BinGrid::square({0, 1, 0, 1}, 4));
  save_image(nl, ImagePaths::from(dir.path / "nl.csv"));
  const CountImage nl_back = load_image(dir.path / "nl.csv");
  CHECK(nl_back.noiseless());
  for (std::size_t i = 0; i < 16; ++i) CHECK(nl_back.counts()[i] == nl.counts()[i]);
}

TEST_CASE("image loading validates input") {
  TempDir dir("pdecon_obs_load");
  auto write = [&](const std::string& csv, const std::string& meta) {
    std::ofstream(dir.path / "x.csv") << csv;
    std::ofstream(dir.path / "x.json") << meta;
    return dir.path / "x.csv";
  };
  const std::string meta = R"({"width_px": 2, "height_px": 2, "pixel_size": 10, "units": "nm", "t": 100})";
  const CountImage ok = load_image(write("0,1\n2,3\n", meta));
  CHECK(ok.counts()[0] == 0);
  CHECK(ok.counts()[1] == 1);
  CHECK(ok.counts()[2] == 2);
  CHECK(ok.counts()[3] == 3);
  CHECK(ok.grid().window().x1 == 20);

  CHECK_THROWS_AS(load_image(write("0,1,2\n2,3,4\n", meta)), ImageDimensionError);
  CHECK_THROWS_AS(load_image(write("0,1\n", meta)), ImageDimensionError);
  try {
    load_image(write("0,1\n2,-3\n", meta));
    FAIL("negative count accepted");
  } catch (const NegativeCountError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_image(write("0,1\n2,3\n", R"({"width_px": 2})")), MetadataError);
  CHECK_THROWS_AS(load_image(write("0,1\n2,3\n", "not json")), MetadataError);
  CHECK_THROWS_AS(load_image(write("0,1.5\n2,3\n", meta)), FormatError);

  const CountImage no_t =
      load_image(write("0,1\n2,3\n", R"({"width_px": 2, "height_px": 2, "pixel_size": 10, "units": "nm"})"));
  CHECK(no_t.exposure() == 6.0);
  CHECK_THROWS_AS(load_image(dir.path / "missing.csv"), FormatError);
}
