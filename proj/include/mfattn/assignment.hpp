#pragma once

#include <limits>
#include <vector>

#include "mfattn/error.hpp"
#include "mfattn/linalg.hpp"

namespace mfattn {

/// Exact minimum-cost perfect assignment on an n x n dense cost matrix
/// (row-major), via the O(n^3) shortest-augmenting-path Hungarian method
/// with dual potentials.  Returns the optimal total cost; perm[i] is the
/// column matched to row i.
inline double solve_assignment(const Vec& cost, int n, std::vector<int>& perm) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0);   // match[j]: row matched to column j (1-based)
  std::vector<int> way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);

  auto c = [&](int i, int j) -> double {  // 1-based accessor
    return cost[static_cast<std::size_t>(i - 1) * n + (j - 1)];
  };

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  perm.assign(n, -1);
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    if (match[j] == 0) continue;
    perm[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  }
  for (int i = 0; i < n; ++i) {
    if (perm[i] < 0)
      throw Error("diagnostics", "solve_assignment", "assignment left a row unmatched");
    total += cost[static_cast<std::size_t>(i) * n + perm[i]];
  }
  return total;
}

}  // namespace mfattn
