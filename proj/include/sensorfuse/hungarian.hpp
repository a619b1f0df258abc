#pragma once

#include <utility>
#include <vector>

namespace sensorfuse {

/// Row-major rows x cols cost matrix.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> cost;

  double at(int r, int c) const { return cost[static_cast<std::size_t>(r) * cols + c]; }
};

/// Minimum-cost one-to-one assignment (O(n^3) shortest augmenting paths with
/// potentials). Rectangular matrices match min(rows, cols) pairs. Returns
/// (row, col) pairs sorted by row.
std::vector<std::pair<int, int>> hungarian(const CostMatrix& m);

double assignment_cost(const CostMatrix& m, const std::vector<std::pair<int, int>>& pairs);

}  // namespace sensorfuse
