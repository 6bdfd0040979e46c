#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdecon/kernels.hpp"
#include "pdecon/measures.hpp"
#include "pdecon/observation.hpp"
#include "pdecon/polynomial.hpp"

namespace pdecon {

enum class PsiFlavor { Real, Complex };

/// Monic polynomials psi_0..psi_order with E_{V ~ K*mu}[psi_i(V)] = m_i(mu).
/// Row i holds the coefficients of psi_i in ascending powers.
class PsiPolynomials {
 public:
  PsiPolynomials(PsiFlavor flavor, std::vector<std::vector<std::complex<double>>> rows);

  PsiFlavor flavor() const { return flavor_; }
  int order() const { return static_cast<int>(rows_.size()) - 1; }
  std::span<const std::complex<double>> coefficients(int i) const { return rows_.at(static_cast<std::size_t>(i)); }
  std::complex<double> evaluate(int i, std::complex<double> z) const;

 private:
  PsiFlavor flavor_;
  std::vector<std::vector<std::complex<double>>> rows_;
};

/// Builds the unit lower-triangular matrix M with M_{ij} = C(i, j) m^K_{i-j}
/// (moments of K as seen through z = x on the line or z = x + iy in the
/// plane) and inverts it by forward substitution; row i of M^{-1} is psi_i.
PsiPolynomials compute_psi(const KernelMoments& kmoments, PsiFlavor flavor);

/// Multivariate psi_alpha(x, y) for all |alpha| <= order in the plane, for
/// kernels with arbitrary (non-product) moments. Same triangular construction
/// over multi-indices: M_{alpha,beta} = C(a1, b1) C(a2, b2) m^K_{alpha-beta}.
class MultiPsi {
 public:
  MultiPsi(int dimension, int order, std::vector<MultiIndex> indices, std::vector<std::vector<double>> rows);

  int dimension() const { return dimension_; }
  int order() const { return order_; }
  /// Index set including (0, 0) first, then graded as multi_indices().
  std::span<const MultiIndex> indices() const { return indices_; }
  /// Coefficient of the monomial indices()[beta] in psi_{indices()[alpha]}.
  double coefficient(std::size_t alpha, std::size_t beta) const { return rows_[alpha][beta]; }
  /// Sum over beta of coefficient(alpha, beta) x^b1 y^b2.
  double evaluate(std::size_t alpha, const Point& p) const;

 private:
  int dimension_;
  int order_;
  std::vector<MultiIndex> indices_;
  std::vector<std::vector<double>> rows_;
};

MultiPsi compute_multi_psi(const KernelMoments& kmoments);

/// Affine change of coordinates z' = (z - center) / scale applied before
/// estimating moments, for numerical conditioning.
struct MomentFrame {
  Point center;
  double scale = 1.0;

  Point to_frame(const Point& p) const { return {(p.x - center.x) / scale, (p.y - center.y) / scale}; }
  Point from_frame(const Point& p) const { return {center.x + scale * p.x, center.y + scale * p.y}; }
  /// Centered on the grid window, scaled by its larger half-extent.
  static MomentFrame of(const BinGrid& grid);
};

/// m_hat_j = sum_i psi_j(gamma_i) X_i / t for j = 1..k, complex family. `psi`
/// must belong to the kernel expressed in the same frame (see
/// KernelMoments::scaled).
MomentVector estimate_moments(const CountImage& image, const PsiPolynomials& psi, int k,
                              const MomentFrame& frame = {});

/// Multi-index estimates m_hat_alpha for 1 <= |alpha| <= k.
MomentVector estimate_multi_moments(const CountImage& image, const MultiPsi& psi, int k,
                                    const MomentFrame& frame = {});

struct ElementarySymmetric {
  /// eps_0 = 1, eps_1, ..., eps_k
  std::vector<std::complex<double>> coefficients;

  int order() const { return static_cast<int>(coefficients.size()) - 1; }
};

/// eps_l = (k / l) sum_{j=1}^{l} (-1)^{j-1} eps_{l-j} m_j, where m_j are
/// normalized moments (power sums divided by k).
ElementarySymmetric newton_to_elementary(const MomentVector& moments, int k);

/// z^k - eps_1 z^{k-1} + eps_2 z^{k-2} - ... in ascending coefficient order.
ComplexPolynomial poly_from_elementary(const ElementarySymmetric& eps);

/// Atoms from complex moments m_1..m_k via Newton, Vieta and root finding.
std::vector<std::complex<double>> atoms_from_moments(const MomentVector& moments, int k);

struct MmDiagnostics {
  /// Final value of the least-squares objective (mm_general only; in the
  /// normalized frame).
  std::optional<double> objective;
  /// Moment estimates in the original coordinates.
  std::vector<std::complex<double>> moments_hat;
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
};

struct MmEstimate {
  AtomicUniformMeasure measure;
  MmDiagnostics diagnostics;
};

/// Complex method of moments in the plane. Atoms are not projected into any
/// domain. All-zero data yield k copies of the window center, flagged
/// "degenerate_data".
MmEstimate mm_complex(const CountImage& image, const Kernel& kernel, int k);

/// Method of moments on the line: the complex pipeline on real moments, atoms
/// are the real parts of the roots.
MmEstimate mm_real(const CountImage& image, const Kernel& kernel, int k);

struct MmGeneralOptions {
  /// Theta; defaults to the grid window.
  std::optional<Box> domain;
  int restarts = 8;
  std::uint64_t seed = 0x5eed;
  int max_iterations = 2000;
  /// Seed one start from mm_complex / mm_real clipped into the domain.
  bool moment_start = true;
};

/// Multi-start box-constrained least squares on atom coordinates matching
/// all multi-index moments up to order k.
MmEstimate mm_general(const CountImage& image, const Kernel& kernel, int k, const MmGeneralOptions& options = {});

/// The optimization core of mm_general, on given multi-index moment targets
/// (frame coordinates) and a domain in the same coordinates.
MmEstimate fit_multi_moments(const MomentVector& target, int k, const Box& domain, const MmGeneralOptions& options,
                             const std::vector<std::vector<Point>>& extra_starts = {});

void to_json(nlohmann::json& j, const MmEstimate& estimate);

}  // namespace pdecon
