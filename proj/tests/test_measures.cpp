#include <doctest.h>

#include <cmath>

#include "pdecon/errors.hpp"
#include "pdecon/measures.hpp"
#include "support.hpp"

using namespace pdecon;

namespace {

AtomicUniformMeasure line(std::vector<double> xs) { return AtomicUniformMeasure::on_line(xs); }

}  // namespace

TEST_CASE("measure construction validates input") {
  CHECK_THROWS_AS(AtomicUniformMeasure(2, {}), UsageError);
  CHECK_THROWS_AS(AtomicUniformMeasure(3, {{0, 0}}), UsageError);
  CHECK_THROWS_AS(AtomicUniformMeasure(2, {{std::nan(""), 0}}), UsageError);
  CHECK_THROWS_AS(AtomicUniformMeasure(2, {{kInfinity, 0}}), UsageError);
  const AtomicUniformMeasure mu(1, {{0.5, 7.0}});
  CHECK(mu[0].y == 0.0);
}

TEST_CASE("exact moments") {
  const auto m = exact_moments(line({0.0, 1.0}), 2);
  CHECK(m[1].real() == doctest::Approx(0.5));
  CHECK(m[2].real() == doctest::Approx(0.5));

  const std::complex<double> c(0.3, -0.7);
  const auto single = exact_moments(AtomicUniformMeasure(2, {{0.3, -0.7}}), 5);
  for (int p = 1; p <= 5; ++p) CHECK(std::abs(single[p] - std::pow(c, p)) < 1e-15);

  const auto three = exact_moments(line({1, 2, 3}), 3);
  CHECK(three[1].real() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(three[2].real() == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  CHECK(three[3].real() == doctest::Approx(12.0).epsilon(1e-15));

  const auto multi = exact_multi_moments(AtomicUniformMeasure(2, {{1, 2}, {3, 4}}), 2);
  CHECK(multi.at({1, 0}) == doctest::Approx(2.0));
  CHECK(multi.at({0, 1}) == doctest::Approx(3.0));
  CHECK(multi.at({1, 1}) == doctest::Approx((2.0 + 12.0) / 2));
  CHECK(multi.at({0, 2}) == doctest::Approx((4.0 + 16.0) / 2));
  CHECK_THROWS_AS(exact_moments(line({1}), 0), UsageError);
}

TEST_CASE("moment distance") {
  const auto a = exact_moments(line({0, 1}), 2);
  const auto b = exact_moments(line({0.5}), 2);
  CHECK(moment_distance(a, a) == 0.0);
  CHECK(moment_distance(a, b) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(moment_distance(b, a) == moment_distance(a, b));
  CHECK_THROWS_AS(moment_distance(a, exact_moments(line({0.5}), 3)), UsageError);
  CHECK_THROWS_AS(moment_distance(a, exact_multi_moments(line({0.5}), 2)), UsageError);
}

TEST_CASE("wasserstein examples") {
  const auto mu = line({0, 1});
  const auto nu = line({0.1, 0.9});
  CHECK(wasserstein(mu, mu, 1) == 0.0);
  CHECK(wasserstein(mu, mu, kInfinity) == 0.0);
  CHECK(wasserstein(mu, nu, 1) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(wasserstein(mu, nu, kInfinity) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(wasserstein(mu, nu, 2) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(wasserstein(mu, line({0}), 1), UsageError);
  CHECK_THROWS_AS(wasserstein(mu, AtomicUniformMeasure(2, {{0, 0}, {1, 1}}), 1), UsageError);
  CHECK_THROWS_AS(wasserstein(mu, nu, 0.5), UsageError);
}

TEST_CASE("assignment matches brute force for k up to 6") {
  CounterRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 6;
    const int d = 1 + trial % 2;
    const auto mu = testing::random_measure(rng, d, k);
    const auto nu = testing::random_measure(rng, d, k);
    for (double p : {1.0, 2.0, 3.5, kInfinity}) {
      CHECK(wasserstein(mu, nu, p) == doctest::Approx(testing::brute_force_wasserstein(mu, nu, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("wasserstein1_general") {
  const auto mu = line({0, 1});
  CHECK(wasserstein1_general(mu, line({0, 0, 1, 1})) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(wasserstein1_general(mu, line({0.1, 0.9})) == doctest::Approx(0.1));
  // Mass 1/3 at 0, 1/3 at 0.5 and 1/3 at 1 against 1/2 at 0 and 1.
  CHECK(wasserstein1_general(line({0, 0.5, 1}), mu) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("hausdorff examples") {
  CHECK(hausdorff(line({0, 1}), line({0, 0, 1})) == 0.0);
  CHECK(hausdorff(line({0, 1}), line({0.1, 0.9})) == doctest::Approx(0.1));
  CHECK(hausdorff(line({0}), line({0, 2})) == doctest::Approx(2.0));
  CHECK_THROWS_AS(hausdorff(line({0}), AtomicUniformMeasure(2, {{0, 0}})), UsageError);
}

TEST_CASE("metric properties on random triples") {
  CounterRng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + trial % 5;
    const auto a = testing::random_measure(rng, 2, k);
    const auto b = testing::random_measure(rng, 2, k);
    const auto c = testing::random_measure(rng, 2, k);
    for (double p : {1.0, 2.0, kInfinity}) {
      const double ab = wasserstein(a, b, p), ba = wasserstein(b, a, p);
      CHECK(std::abs(ab - ba) <= 1e-12);
      CHECK(ab <= wasserstein(a, c, p) + wasserstein(c, b, p) + 1e-12);
      CHECK(wasserstein(a, a, p) <= 1e-12);
      CHECK(ab > 0.0);
    }
    const double w1 = wasserstein(a, b, 1), w2 = wasserstein(a, b, 2), wi = wasserstein(a, b, kInfinity);
    for (double wp : {w1, w2, wi})
      for (double wq : {w1, w2, wi}) CHECK(wp <= k * wq + 1e-12);
    CHECK(hausdorff(a, b) <= wi + 1e-12);
    CHECK(wi <= k * w1 + 1e-12);
  }
}

TEST_CASE("zero distance iff equal supports with multiplicity") {
  const AtomicUniformMeasure a(2, {{0, 0}, {0, 0}, {1, 1}});
  const AtomicUniformMeasure b(2, {{1, 1}, {0, 0}, {0, 0}});
  const AtomicUniformMeasure c(2, {{1, 1}, {1, 1}, {0, 0}});
  CHECK(wasserstein(a, b, 1) == 0.0);
  CHECK(wasserstein(a, c, 1) > 0.1);
  CHECK(hausdorff(a, c) == 0.0);
}

TEST_CASE("stability probe: W1^k over M_k stays bounded") {
  CounterRng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + trial % 4;
    const auto a = testing::random_measure(rng, 2, k);
    const auto b = testing::random_measure(rng, 2, k);
    const double mk = moment_distance(exact_multi_moments(a, k), exact_multi_moments(b, k));
    const double ratio = std::pow(wasserstein(a, b, 1), k) / mk;
    CHECK(std::isfinite(ratio));
    worst = std::max(worst, ratio);
  }
  CHECK(worst < 1e6);
}

TEST_CASE("cluster profile") {
  const ClusterProfile p(2, {{0, 0}, {1, 0}, {0, 1}}, {2, 1, 1});
  CHECK(p.total() == 4);
  CHECK(p.separation() == doctest::Approx(1.0));
  CHECK(p.cell_weights()[0] == doctest::Approx(1.0));
  CHECK(p.cell_weights()[1] == doctest::Approx(std::pow(1.0, 2) * std::sqrt(2.0)));
  CHECK(p.cell_weights()[2] == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(ClusterProfile(2, {{0, 0}, {0, 0}}, {1, 1}), UsageError);
  CHECK_THROWS_AS(ClusterProfile(2, {{0, 0}}, {0}), UsageError);

  const auto q = ClusterProfile::from_measure(AtomicUniformMeasure(2, {{1, 1}, {0, 0}, {1, 1}}));
  REQUIRE(q.centers().size() == 2);
  CHECK(q.multiplicities()[0] == 2);
  CHECK(q.multiplicities()[1] == 1);
}

TEST_CASE("voronoi assignment") {
  const ClusterProfile p(2, {{0, 0}, {1, 0}, {0, 1}}, {2, 1, 1});
  const auto cells = voronoi_assign(p, p.measure());
  REQUIRE(cells.size() == 3);
  CHECK(cells[0].atoms.size() == 2);
  CHECK(cells[1].atoms.size() == 1);
  CHECK(cells[2].atoms.size() == 1);
  CHECK(cells[0].mass == doctest::Approx(0.5));

  // Equidistant from cells 0 and 1.
  CHECK(p.cell_of({0.5, -0.3}) == 0);
  CHECK(p.cell_of({0.5, 0.5}) == 0);
  CHECK(p.cell_of({0.6, 0.4}) == 1);

  CounterRng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Point> moved;
    for (const auto& a : p.measure().atoms()) {
      const double r = 0.249 * p.separation() * rng.uniform();
      const double ang = 6.283185307179586 * rng.uniform();
      moved.push_back({a.x + r * std::cos(ang), a.y + r * std::sin(ang)});
    }
    const auto got = voronoi_assign(p, AtomicUniformMeasure(2, moved));
    for (std::size_t j = 0; j < 3; ++j) CHECK(got[j].mass == doctest::Approx(p.multiplicities()[j] / 4.0));
  }
}

TEST_CASE("local divergence") {
  const ClusterProfile p(2, {{0, 0}, {1, 0}, {0, 1}}, {1, 1, 1});
  const auto mu = p.measure();
  CHECK(local_divergence(p, mu, mu) == 0.0);

  const AtomicUniformMeasure nu(2, {{0.01, 0}, {1, 0.02}, {0, 1.03}});
  const double expected = 1.0 * 0.01 + std::sqrt(2.0) * 0.02 + std::sqrt(2.0) * 0.03;
  CHECK(local_divergence(p, mu, nu) == doctest::Approx(expected).epsilon(1e-12));

  // nu leaves cell 2 empty.
  const AtomicUniformMeasure empty(2, {{0.01, 0}, {1, 0.02}, {1.0, 0.1}});
  CHECK(local_divergence(p, mu, empty) == 1.0);

  // Capped at one.
  const AtomicUniformMeasure far(2, {{0.4, 0}, {1, 0.4}, {0, 1.4}});
  CHECK(local_divergence(p, mu, far) == 1.0);

  // Clusters with r_j = 2 use W_1 squared.
  const ClusterProfile p2(1, {{0, 0}, {1, 0}}, {2, 2});
  const auto a = line({0, 0, 1, 1});
  const auto b = line({-0.01, 0.01, 1.02, 1.0});
  CHECK(local_divergence(p2, a, b) == doctest::Approx(1.0 * 0.01 * 0.01 + 1.0 * 0.01 * 0.01).epsilon(1e-12));
  CHECK_THROWS_AS(local_divergence(p2, a, line({0, 1})), UsageError);
}

TEST_CASE("moment-matched perturbation") {
  const double tau = 1e-3;
  const auto nu = perturb_matching_moments(line({-1, 1}), tau);
  const auto m = exact_moments(nu, 2);
  CHECK(std::abs(m[1]) < 1e-14);
  CHECK(m[2].real() == doctest::Approx(1.0 - tau).epsilon(1e-13));
  std::vector<double> xs{nu[0].x, nu[1].x};
  std::sort(xs.begin(), xs.end());
  CHECK(xs[1] == doctest::Approx(std::sqrt(1.0 - tau)).epsilon(1e-13));

  const auto base = line({1, 2, 3});
  const auto pert = perturb_matching_moments(base, 1e-4);
  const auto mp = exact_moments(pert, 3);
  CHECK(std::abs(mp[1].real() - 2.0) < 1e-8);
  CHECK(std::abs(mp[2].real() - 14.0 / 3.0) < 1e-8);
  CHECK(std::abs(mp[3].real() - 12.0) == doctest::Approx(1e-4).epsilon(1e-6));
  CHECK(wasserstein(base, pert, 1) > 0.0);

  double previous = kInfinity;
  for (double t : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const double w = wasserstein(base, perturb_matching_moments(base, t), kInfinity);
    CHECK(w < previous);
    previous = w;
  }
  CHECK(previous < 1e-6);

  CHECK_THROWS_AS(perturb_matching_moments(line({-1, 1}), 2.0), UsageError);
  CHECK_THROWS_AS(perturb_matching_moments(line({0, 0}), 1e-3), UsageError);
  CHECK_THROWS_AS(perturb_matching_moments(line({0, 1}), -1.0), UsageError);
}

TEST_CASE("json roundtrip") {
  const AtomicUniformMeasure mu(2, {{0.1, 0.2}, {-3.5, 1e-9}});
  nlohmann::json j = mu;
  CHECK(j["dimension"] == 2);
  const auto back = measure_from_json(j);
  CHECK(wasserstein(mu, back, kInfinity) == 0.0);
  CHECK_THROWS_AS(measure_from_json(nlohmann::json{{"atoms", {{0, 0}}}}), FormatError);
}
