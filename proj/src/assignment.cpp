#include "pdecon/assignment.hpp"

#include <algorithm>
#include <limits>

namespace pdecon {

Assignment min_sum_assignment(const CostMatrix& cost) {
  // Shortest augmenting path formulation with potentials (1-based internally).
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) out.row_to_col[p[j] - 1] = j - 1;
  }
  // Re-sum from the original entries so the value is exact for the matching.
  for (std::size_t r = 0; r < n; ++r) out.cost += cost(r, out.row_to_col[r]);
  return out;
}

namespace {

// Kuhn's augmenting-path matching restricted to entries <= threshold.
bool perfect_matching_below(const CostMatrix& cost, double threshold, std::vector<std::size_t>& col_owner) {
  const std::size_t n = cost.size();
  const std::size_t none = n;
  col_owner.assign(n, none);
  std::vector<char> visited;

  auto augment = [&](auto&& self, std::size_t r) -> bool {
    for (std::size_t c = 0; c < n; ++c) {
      if (cost(r, c) > threshold || visited[c]) continue;
      visited[c] = 1;
      if (col_owner[c] == none || self(self, col_owner[c])) {
        col_owner[c] = r;
        return true;
      }
    }
    return false;
  };

  for (std::size_t r = 0; r < n; ++r) {
    visited.assign(n, 0);
    if (!augment(augment, r)) return false;
  }
  return true;
}

}  // namespace

Assignment bottleneck_assignment(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  Assignment out;
  if (n == 0) return out;

  std::vector<double> values;
  values.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) values.push_back(cost(r, c));
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  // Smallest threshold admitting a perfect matching.
  std::size_t lo = 0, hi = values.size() - 1;
  std::vector<std::size_t> owner;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (perfect_matching_below(cost, values[mid], owner)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  perfect_matching_below(cost, values[lo], owner);
  out.row_to_col.assign(n, 0);
  for (std::size_t c = 0; c < n; ++c) out.row_to_col[owner[c]] = c;
  out.cost = values[lo];
  return out;
}

}  // namespace pdecon
