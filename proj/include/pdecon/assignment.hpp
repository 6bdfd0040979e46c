#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pdecon {

/// Square cost matrix stored row-major.
class CostMatrix {
 public:
  explicit CostMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }

 private:
  std::size_t n_;
  std::vector<double> data_;
};

struct Assignment {
  /// column assigned to each row
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

/// Minimum-sum perfect matching (Hungarian algorithm, O(n^3)).
Assignment min_sum_assignment(const CostMatrix& cost);

/// Perfect matching minimizing the largest selected entry. The returned `cost`
/// is that largest entry.
Assignment bottleneck_assignment(const CostMatrix& cost);

}  // namespace pdecon
