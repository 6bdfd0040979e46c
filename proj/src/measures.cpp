#include "pdecon/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pdecon/assignment.hpp"
#include "pdecon/errors.hpp"
#include "pdecon/polynomial.hpp"

namespace pdecon {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

AtomicUniformMeasure::AtomicUniformMeasure(int dimension, std::vector<Point> atoms)
    : dimension_(dimension), atoms_(std::move(atoms)) {
  if (dimension_ != 1 && dimension_ != 2) {
    throw UsageError("AtomicUniformMeasure: dimension must be 1 or 2, got " + std::to_string(dimension_));
  }
  if (atoms_.empty()) throw UsageError("AtomicUniformMeasure: at least one atom is required");
  for (Point& p : atoms_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw UsageError("AtomicUniformMeasure: atom coordinates must be finite");
    }
    if (dimension_ == 1) p.y = 0.0;
  }
}

AtomicUniformMeasure AtomicUniformMeasure::on_line(std::span<const double> positions) {
  std::vector<Point> atoms;
  atoms.reserve(positions.size());
  for (double x : positions) atoms.push_back({x, 0.0});
  return AtomicUniformMeasure(1, std::move(atoms));
}

AtomicUniformMeasure AtomicUniformMeasure::from_complex(std::span<const std::complex<double>> atoms) {
  std::vector<Point> pts;
  pts.reserve(atoms.size());
  for (const auto& z : atoms) pts.push_back({z.real(), z.imag()});
  return AtomicUniformMeasure(2, std::move(pts));
}

std::vector<std::complex<double>> AtomicUniformMeasure::complex_atoms() const {
  std::vector<std::complex<double>> out;
  out.reserve(atoms_.size());
  for (const Point& p : atoms_) out.push_back(p.as_complex());
  return out;
}

std::vector<MultiIndex> multi_indices(int dimension, int order) {
  std::vector<MultiIndex> out;
  for (int n = 1; n <= order; ++n) {
    if (dimension == 1) {
      out.push_back({n, 0});
      continue;
    }
    for (int a = n; a >= 0; --a) out.push_back({a, n - a});
  }
  return out;
}

MomentVector::MomentVector(MomentFamily family, int dimension, int order,
                           std::vector<std::complex<double>> values)
    : family_(family), dimension_(dimension), order_(order), values_(std::move(values)) {
  if (order_ < 1) throw UsageError("MomentVector: order must be >= 1");
  if (family_ == MomentFamily::Complex) {
    for (int j = 1; j <= order_; ++j) indices_.push_back({j, 0});
  } else {
    indices_ = multi_indices(dimension_, order_);
  }
  if (values_.size() != indices_.size()) {
    throw UsageError("MomentVector: expected " + std::to_string(indices_.size()) + " entries, got " +
                     std::to_string(values_.size()));
  }
  for (const auto& v : values_) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw UsageError("MomentVector: non-finite entry");
  }
}

std::complex<double> MomentVector::operator[](int j) const {
  if (family_ != MomentFamily::Complex || j < 1 || j > order_) {
    throw UsageError("MomentVector: index out of range");
  }
  return values_[static_cast<std::size_t>(j - 1)];
}

double MomentVector::at(MultiIndex alpha) const {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] == alpha) return values_[i].real();
  }
  throw UsageError("MomentVector: multi-index not present");
}

MomentVector exact_moments(const AtomicUniformMeasure& mu, int order) {
  if (order < 1) throw UsageError("exact_moments: order must be >= 1");
  std::vector<std::complex<double>> m(static_cast<std::size_t>(order), 0.0);
  for (const Point& p : mu.atoms()) {
    const std::complex<double> z = p.as_complex();
    std::complex<double> power = 1.0;
    for (int j = 0; j < order; ++j) {
      power *= z;
      m[static_cast<std::size_t>(j)] += power;
    }
  }
  const double k = static_cast<double>(mu.size());
  for (auto& v : m) v /= k;
  return MomentVector(MomentFamily::Complex, mu.dimension(), order, std::move(m));
}

MomentVector exact_multi_moments(const AtomicUniformMeasure& mu, int order) {
  if (order < 1) throw UsageError("exact_multi_moments: order must be >= 1");
  const auto indices = multi_indices(mu.dimension(), order);
  std::vector<std::complex<double>> m(indices.size(), 0.0);
  const double k = static_cast<double>(mu.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    double sum = 0.0;
    for (const Point& p : mu.atoms()) sum += std::pow(p.x, indices[i].a) * std::pow(p.y, indices[i].b);
    m[i] = sum / k;
  }
  return MomentVector(MomentFamily::MultiIndex, mu.dimension(), order, std::move(m));
}

double moment_distance(const MomentVector& a, const MomentVector& b) {
  if (a.family() != b.family() || a.order() != b.order() || a.dimension() != b.dimension()) {
    throw UsageError("moment_distance: moment vectors differ in family, order or dimension");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) sum += std::abs(a.values()[i] - b.values()[i]);
  return sum;
}

namespace {

void require_same_shape(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu, const char* what) {
  if (mu.dimension() != nu.dimension()) throw UsageError(std::string(what) + ": dimension mismatch");
  if (mu.size() != nu.size()) {
    throw UsageError(std::string(what) + ": measures must have the same number of atoms (" +
                     std::to_string(mu.size()) + " vs " + std::to_string(nu.size()) + ")");
  }
}

CostMatrix distance_matrix(std::span<const Point> a, std::span<const Point> b, double power) {
  CostMatrix c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = distance(a[i], b[j]);
      c(i, j) = power == 1.0 ? d : std::pow(d, power);
    }
  return c;
}

}  // namespace

double wasserstein(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu, double p) {
  require_same_shape(mu, nu, "wasserstein");
  if (!(p >= 1.0)) throw UsageError("wasserstein: p must lie in [1, inf]");
  const double k = static_cast<double>(mu.size());
  if (std::isinf(p)) return bottleneck_assignment(distance_matrix(mu.atoms(), nu.atoms(), 1.0)).cost;
  const double total = min_sum_assignment(distance_matrix(mu.atoms(), nu.atoms(), p)).cost;
  return std::pow(std::max(total, 0.0) / k, 1.0 / p);
}

double wasserstein1_general(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu) {
  if (mu.dimension() != nu.dimension()) throw UsageError("wasserstein1_general: dimension mismatch");
  if (mu.size() == nu.size()) return wasserstein(mu, nu, 1.0);
  // Uniform weights 1/a and 1/b become equal weights after replicating each
  // atom lcm/a (resp. lcm/b) times.
  const std::size_t l = std::lcm(mu.size(), nu.size());
  std::vector<Point> a, b;
  a.reserve(l);
  b.reserve(l);
  for (const Point& p : mu.atoms()) a.insert(a.end(), l / mu.size(), p);
  for (const Point& p : nu.atoms()) b.insert(b.end(), l / nu.size(), p);
  return min_sum_assignment(distance_matrix(a, b, 1.0)).cost / static_cast<double>(l);
}

double hausdorff(const AtomicUniformMeasure& mu, const AtomicUniformMeasure& nu) {
  if (mu.dimension() != nu.dimension()) throw UsageError("hausdorff: dimension mismatch");
  auto directed = [](std::span<const Point> from, std::span<const Point> to) {
    double worst = 0.0;
    for (const Point& p : from) {
      double best = kInfinity;
      for (const Point& q : to) best = std::min(best, distance(p, q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(mu.atoms(), nu.atoms()), directed(nu.atoms(), mu.atoms()));
}

ClusterProfile::ClusterProfile(int dimension, std::vector<Point> centers, std::vector<int> multiplicities)
    : dimension_(dimension), centers_(std::move(centers)), multiplicities_(std::move(multiplicities)) {
  if (centers_.empty() || centers_.size() != multiplicities_.size()) {
    throw UsageError("ClusterProfile: need one multiplicity per center and at least one center");
  }
  for (int r : multiplicities_) {
    if (r < 1) throw UsageError("ClusterProfile: multiplicities must be positive");
    total_ += r;
  }
  for (std::size_t i = 0; i < centers_.size(); ++i)
    for (std::size_t j = i + 1; j < centers_.size(); ++j)
      separation_ = std::min(separation_, distance(centers_[i], centers_[j]));
  if (!(separation_ > 0.0)) throw UsageError("ClusterProfile: cluster centers must be distinct");

  cell_weights_.assign(centers_.size(), 1.0);
  for (std::size_t j = 0; j < centers_.size(); ++j)
    for (std::size_t i = 0; i < centers_.size(); ++i)
      if (i != j) cell_weights_[j] *= std::pow(distance(centers_[i], centers_[j]), multiplicities_[i]);
}

ClusterProfile ClusterProfile::from_measure(const AtomicUniformMeasure& mu0) {
  std::vector<Point> centers;
  std::vector<int> mult;
  for (const Point& p : mu0.atoms()) {
    auto it = std::find(centers.begin(), centers.end(), p);
    if (it == centers.end()) {
      centers.push_back(p);
      mult.push_back(1);
    } else {
      ++mult[static_cast<std::size_t>(it - centers.begin())];
    }
  }
  return ClusterProfile(mu0.dimension(), std::move(centers), std::move(mult));
}

AtomicUniformMeasure ClusterProfile::measure() const {
  std::vector<Point> atoms;
  for (std::size_t j = 0; j < centers_.size(); ++j)
    atoms.insert(atoms.end(), static_cast<std::size_t>(multiplicities_[j]), centers_[j]);
  return AtomicUniformMeasure(dimension_, std::move(atoms));
}

std::size_t ClusterProfile::cell_of(const Point& p) const {
  std::size_t best = 0;
  double best_d = distance(p, centers_[0]);
  for (std::size_t j = 1; j < centers_.size(); ++j) {
    const double d = distance(p, centers_[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

std::vector<CellMeasure> voronoi_assign(const ClusterProfile& profile, const AtomicUniformMeasure& mu) {
  std::vector<CellMeasure> cells(profile.centers().size());
  for (const Point& p : mu.atoms()) cells[profile.cell_of(p)].atoms.push_back(p);
  const double k = static_cast<double>(mu.size());
  for (auto& c : cells) c.mass = static_cast<double>(c.atoms.size()) / k;
  return cells;
}

double local_divergence(const ClusterProfile& profile, const AtomicUniformMeasure& mu,
                        const AtomicUniformMeasure& nu) {
  const auto k = static_cast<std::size_t>(profile.total());
  if (mu.size() != k || nu.size() != k) {
    throw UsageError("local_divergence: both measures must have as many atoms as the profile");
  }
  const auto cells_mu = voronoi_assign(profile, mu);
  const auto cells_nu = voronoi_assign(profile, nu);
  double sum = 0.0;
  for (std::size_t j = 0; j < cells_mu.size(); ++j) {
    const CellMeasure& a = cells_mu[j];
    const CellMeasure& b = cells_nu[j];
    if (a.empty() && b.empty()) continue;
    if (a.empty() != b.empty()) return 1.0;
    const double w1 = wasserstein1_general(AtomicUniformMeasure(profile.dimension(), a.atoms),
                                           AtomicUniformMeasure(profile.dimension(), b.atoms));
    sum += profile.cell_weights()[j] * std::pow(w1, profile.multiplicities()[j]);
  }
  return std::min(1.0, sum);
}

AtomicUniformMeasure perturb_matching_moments(const AtomicUniformMeasure& mu, double tau) {
  if (mu.dimension() != 1) throw UsageError("perturb_matching_moments: measure must live on the real line");
  if (!(tau > 0.0)) throw UsageError("perturb_matching_moments: tau must be positive");
  std::vector<std::complex<double>> atoms;
  for (const Point& p : mu.atoms()) {
    for (const auto& q : atoms) {
      if (q.real() == p.x) throw UsageError("perturb_matching_moments: atoms must be distinct");
    }
    atoms.emplace_back(p.x, 0.0);
  }

  ComplexPolynomial poly = from_roots(atoms);
  poly[0] += tau;
  const auto roots = complex_roots(poly);

  double span = 0.0;
  for (const auto& a : atoms) span = std::max(span, std::abs(a));
  const double imag_tol = 1e-7 * (1.0 + span);
  std::vector<double> xs;
  for (const auto& r : roots) {
    if (std::abs(r.imag()) > imag_tol) {
      throw UsageError("perturb_matching_moments: tau is too large, T_mu + tau has non-real roots; use a smaller tau");
    }
    xs.push_back(r.real());
  }
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] - xs[i - 1] <= imag_tol) {
      throw UsageError("perturb_matching_moments: tau is too large, perturbed roots are not distinct; use a smaller tau");
    }
  }
  return AtomicUniformMeasure::on_line(xs);
}

void to_json(nlohmann::json& j, const AtomicUniformMeasure& mu) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const Point& p : mu.atoms()) {
    if (mu.dimension() == 1) {
      atoms.push_back(nlohmann::json::array({p.x}));
    } else {
      atoms.push_back(nlohmann::json::array({p.x, p.y}));
    }
  }
  j = nlohmann::json{{"dimension", mu.dimension()}, {"atoms", std::move(atoms)}};
}

AtomicUniformMeasure measure_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dimension") || !j.contains("atoms")) {
    throw FormatError("measure JSON must be an object with \"dimension\" and \"atoms\"");
  }
  const int d = j.at("dimension").get<int>();
  std::vector<Point> atoms;
  for (const auto& a : j.at("atoms")) {
    if (a.is_number()) {
      atoms.push_back({a.get<double>(), 0.0});
      continue;
    }
    if (!a.is_array() || static_cast<int>(a.size()) != d) {
      throw FormatError("measure JSON: every atom must be an array of length " + std::to_string(d));
    }
    atoms.push_back({a[0].get<double>(), d == 2 ? a[1].get<double>() : 0.0});
  }
  return AtomicUniformMeasure(d, std::move(atoms));
}

}  // namespace pdecon
