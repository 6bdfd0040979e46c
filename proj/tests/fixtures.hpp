#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pdecon/measures.hpp"

namespace testing {

/// Synthetic origami scene in nm: five structures, each two clusters 71 apart
/// along its axis, each cluster two atoms 8 apart across it.
struct Origami {
  struct Structure {
    double cx, cy, angle;
  };
  static constexpr double kHalfGap = 35.5;
  static constexpr double kHalfPair = 4.0;

  std::vector<Structure> structures{
      {1000, 1100, 0.3}, {3000, 1300, 1.2}, {5000, 900, 2.0}, {1900, 3600, 0.8}, {4300, 4700, 2.7}};

  std::vector<pdecon::Point> cluster_centers() const {
    std::vector<pdecon::Point> c;
    for (const auto& s : structures)
      for (double side : {-1.0, 1.0})
        c.push_back({s.cx + side * kHalfGap * std::cos(s.angle), s.cy + side * kHalfGap * std::sin(s.angle)});
    return c;
  }

  pdecon::AtomicUniformMeasure measure() const {
    std::vector<pdecon::Point> atoms;
    std::size_t i = 0;
    const auto centers = cluster_centers();
    for (const auto& s : structures)
      for (int side = 0; side < 2; ++side, ++i)
        for (double across : {-1.0, 1.0})
          atoms.push_back({centers[i].x - across * kHalfPair * std::sin(s.angle),
                           centers[i].y + across * kHalfPair * std::cos(s.angle)});
    return pdecon::AtomicUniformMeasure(2, atoms);
  }

  /// Config for the simulate subcommand: 600 x 600 pixels of 10 nm.
  nlohmann::json simulate_config(std::uint64_t seed) const {
    nlohmann::json j;
    j["kernel"] = {{"type", "gaussian"}, {"sigma", 42.0}};
    j["measure"] = measure();
    j["grid"] = {{"window", {0, 6000, 0, 6000}}, {"m", 600}};
    j["t"] = 2e5;
    j["seed"] = seed;
    j["units"] = "nm";
    j["name"] = "origami";
    return j;
  }

  /// Share of cluster centers with an estimated atom within `radius`.
  double recovered_fraction(const pdecon::AtomicUniformMeasure& estimate, double radius) const {
    const auto centers = cluster_centers();
    int hit = 0;
    for (const auto& c : centers) {
      double best = 1e300;
      for (const auto& p : estimate.atoms()) best = std::min(best, pdecon::distance(p, c));
      if (best <= radius) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(centers.size());
  }
};

}  // namespace testing
