#include "sensorfuse/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sensorfuse/errors.hpp"

namespace sensorfuse {

namespace {

// Assigns every row of an n x m matrix (n <= m); returns the column of each row.
std::vector<int> solve(int n, int m, const std::vector<double>& a) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[static_cast<std::size_t>(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  return col_of;
}

}  // namespace

std::vector<std::pair<int, int>> hungarian(const CostMatrix& m) {
  if (m.cost.size() != static_cast<std::size_t>(m.rows) * m.cols) {
    throw ShapeError("hungarian: cost size does not match dimensions");
  }
  for (double c : m.cost) {
    if (!std::isfinite(c)) throw ContractViolation("hungarian: non-finite cost");
  }
  std::vector<std::pair<int, int>> pairs;
  if (m.rows == 0 || m.cols == 0) return pairs;
  if (m.rows <= m.cols) {
    const auto col_of = solve(m.rows, m.cols, m.cost);
    for (int r = 0; r < m.rows; ++r) pairs.emplace_back(r, col_of[r]);
  } else {
    std::vector<double> t(m.cost.size());
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) t[static_cast<std::size_t>(c) * m.rows + r] = m.at(r, c);
    const auto row_of = solve(m.cols, m.rows, t);
    for (int c = 0; c < m.cols; ++c) pairs.emplace_back(row_of[c], c);
    std::sort(pairs.begin(), pairs.end());
  }
  return pairs;
}

double assignment_cost(const CostMatrix& m, const std::vector<std::pair<int, int>>& pairs) {
  double total = 0.0;
  for (const auto& [r, c] : pairs) total += m.at(r, c);
  return total;
}

}  // namespace sensorfuse
