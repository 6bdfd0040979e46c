#pragma once

#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace pdecon {

/// A location in R^1 or R^2. One-dimensional points leave `y` at zero.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
  std::complex<double> as_complex() const { return {x, y}; }
};

double distance(const Point& a, const Point& b);

/// Uniform measure (1/k) sum_i delta_{theta_i} on R^d, d in {1, 2}.
///
/// Weights are never stored. The atom list is non-empty and every coordinate
/// is finite; both are checked on construction.
class AtomicUniformMeasure {
 public:
  AtomicUniformMeasure(int dimension, std::vector<Point> atoms);

  static AtomicUniformMeasure on_line(std::span<const double> positions);
  static AtomicUniformMeasure from_complex(std::span<const std::complex<double>> atoms);

  int dimension() const { return dimension_; }
  std::size_t size() const { return atoms_.size(); }
  std::span<const Point> atoms() const { return atoms_; }
  const Point& operator[](std::size_t i) const { return atoms_[i]; }

  /// Atoms under the x + iy embedding.
  std::vector<std::complex<double>> complex_atoms() const;

 private:
  int dimension_;
  std::vector<Point> atoms_;
};

/// Multi-index (a, b) for the monomial x^a y^b. In one dimension b is zero.
struct MultiIndex {
  int a = 0;
  int b = 0;

  int total() const { return a + b; }
  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

/// All multi-indices with 1 <= |alpha| <= order, graded, then by decreasing a.
std::vector<MultiIndex> multi_indices(int dimension, int order);

enum class MomentFamily {
  /// m_j = E[z^j] with z = x + iy (z = x on the line), j = 1..order.
  Complex,
  /// m_alpha = E[x^a y^b] for every 1 <= a + b <= order.
  MultiIndex,
};

/// Moments up to a fixed order. Entries are complex so both families share one
/// container; multi-index entries always have zero imaginary part.
class MomentVector {
 public:
  MomentVector(MomentFamily family, int dimension, int order,
               std::vector<std::complex<double>> values);

  MomentFamily family() const { return family_; }
  int dimension() const { return dimension_; }
  int order() const { return order_; }
  std::span<const MultiIndex> indices() const { return indices_; }
  std::span<const std::complex<double>> values() const { return values_; }

  /// Complex family: the moment of order j (1-based).
  std::complex<double> operator[](int j) const;
  /// Multi-index family lookup.
  double at(MultiIndex alpha) const;

 private:
  MomentFamily family_;
  int dimension_;
  int order_;
  std::vector<MultiIndex> indices_;
  std::vector<std::complex<double>> values_;
};

MomentVector exact_moments(const AtomicUniformMeasure& mu, int order);
MomentVector exact_multi_moments(const AtomicUniformMeasure& mu, int order);

/// M_k: sum of |a_alpha - b_alpha| over all indices.
double moment_distance(const MomentVector& a, const MomentVector& b);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// W_p between uniform measures with equal atom counts; p = kInfinity gives
/// the bottleneck distance.
double wasserstein(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu, double p);

/// W_1 between uniform measures with possibly different atom counts.
double wasserstein1_general(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu);

double hausdorff(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu);

/// Reference clustered measure mu0 for the local divergence.
class ClusterProfile {
 public:
  /// `centers` are the k0 distinct support points, `multiplicities` the r_j.
  ClusterProfile(int dimension, std::vector<Point> centers, std::vector<int> multiplicities);

  /// Groups coincident atoms of `mu0` (exact equality) into clusters in order of
  /// first appearance.
  static ClusterProfile from_measure(const AtomicUniformMeasure& mu0);

  int dimension() const { return dimension_; }
  std::span<const Point> centers() const { return centers_; }
  std::span<const int> multiplicities() const { return multiplicities_; }
  int total() const { return total_; }
  double separation() const { return separation_; }
  /// delta_j(mu0) = prod_{i != j} |theta_0i - theta_0j|^{r_i}.
  std::span<const double> cell_weights() const { return cell_weights_; }
  AtomicUniformMeasure measure() const;

  /// Index of the Voronoi cell containing `p`; ties go to the lowest index.
  std::size_t cell_of(const Point& p) const;

 private:
  int dimension_;
  std::vector<Point> centers_;
  std::vector<int> multiplicities_;
  int total_ = 0;
  double separation_ = kInfinity;
  std::vector<double> cell_weights_;
};

/// Atoms of a measure falling into one Voronoi cell. `atoms` is empty when the
/// cell receives nothing; otherwise it is the conditional measure mu_{V_j}.
struct CellMeasure {
  std::vector<Point> atoms;
  /// Unconditional mass mu(V_j) = |atoms| / k.
  double mass = 0.0;

  bool empty() const { return atoms.empty(); }
};

std::vector<CellMeasure> voronoi_assign(const ClusterProfile& profile, const AtomicUniformMeasure& mu);

/// 1 ^ sum_j delta_j(mu0) W_1^{r_j}(mu_{V_j}, nu_{V_j}).
double local_divergence(const ClusterProfile& profile, const AtomicUniformMeasure& mu,
                        const AtomicUniformMeasure& nu);

/// Replaces the atoms of `mu` (on the line) by the roots of T_mu(x) + tau where
/// T_mu(x) = prod_i (x - theta_i). The result shares moments 1..k-1 with `mu`
/// and its k-th moment differs by exactly -tau. Throws UsageError if the
/// perturbed polynomial has non-real roots.
AtomicUniformMeasure perturb_matching_moments(const AtomicUniformMeasure& mu, double tau);

/// Tolerances used by identity checks; tests and callers may override.
struct Tolerances {
  double algebraic = 1e-12;
  double root_finding = 1e-8;
};

void to_json(nlohmann::json& j, const AtomicUniformMeasure& mu);
AtomicUniformMeasure measure_from_json(const nlohmann::json& j);

}  // namespace pdecon
