#pragma once

// Reference implementations used only by tests. Each one is written from the
// defining formula with no shared code from the library, so agreement between
// the two is evidence rather than tautology.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "fplcast/gbm.hpp"

namespace oracle {

// Rank of v[i]: 1 + (number of strictly smaller values) + (ties - 1) / 2.
inline std::vector<double> ranks_by_counting(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0;
    std::size_t equal = 0;
    for (double u : v) {
      if (u < v[i]) ++less;
      if (u == v[i]) ++equal;
    }
    r[i] = static_cast<double>(less) + (static_cast<double>(equal) + 1.0) / 2.0;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  long double ma = 0;
  long double mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double sab = 0;
  long double saa = 0;
  long double sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

// NaN when either side is fully tied.
inline double spearman(std::span<const double> y, std::span<const double> yhat) {
  const auto ry = ranks_by_counting(y);
  const auto rh = ranks_by_counting(yhat);
  return pearson(ry, rh);
}

// Dense Gaussian elimination with partial pivoting, in long double.
inline std::vector<long double> solve(std::vector<std::vector<long double>> a,
                                      std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[pivot][c])) pivot = r;
    }
    std::swap(a[c], a[pivot]);
    std::swap(b[c], b[pivot]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const long double factor = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= factor * a[c][k];
      b[r] -= factor * b[c];
    }
  }
  std::vector<long double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    long double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

struct RidgeSolution {
  std::vector<double> weights;
  double intercept = 0.0;
};

// Minimizes sum (y - b0 - x.b)^2 + lambda |b|^2 through the augmented normal
// equations [n, 1'X; X'1, X'X + lambda I] [b0; b] = [1'y; X'y] on raw data.
inline RidgeSolution ridge(const std::vector<std::vector<double>>& x,
                           const std::vector<double>& y, double lambda) {
  const std::size_t n = x.size();
  const std::size_t f = n ? x[0].size() : 0;
  std::vector<std::vector<long double>> a(f + 1, std::vector<long double>(f + 1, 0));
  std::vector<long double> b(f + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> row(f + 1);
    row[0] = 1;
    for (std::size_t j = 0; j < f; ++j) row[j + 1] = x[i][j];
    for (std::size_t p = 0; p <= f; ++p) {
      for (std::size_t q = 0; q <= f; ++q) a[p][q] += row[p] * row[q];
      b[p] += row[p] * y[i];
    }
  }
  for (std::size_t j = 1; j <= f; ++j) a[j][j] += lambda;
  const auto beta = solve(a, b);
  RidgeSolution s;
  s.intercept = static_cast<double>(beta[0]);
  for (std::size_t j = 1; j <= f; ++j) s.weights.push_back(static_cast<double>(beta[j]));
  return s;
}

// Best split of the rows `rows` by scanning every feature and every boundary
// between distinct sorted values. Gain is the reduction in the regularized
// squared-error objective.
struct Split {
  bool valid = false;
  double gain = 0.0;
};

inline long double node_score(long double sum, long double count, double lambda) {
  return sum * sum / (count + lambda);
}

inline Split best_split(const Eigen::MatrixXd& x, std::span<const double> r,
                        const std::vector<int>& rows, int min_leaf, double lambda) {
  Split best;
  if (rows.size() < static_cast<std::size_t>(2 * min_leaf)) return best;
  long double total = 0;
  for (int i : rows) total += r[i];
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::vector<double> values;
    for (int i : rows) values.push_back(x(i, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 1; v < values.size(); ++v) {
      long double left = 0;
      long double n_left = 0;
      for (int i : rows) {
        if (x(i, f) < values[v]) {
          left += r[i];
          n_left += 1;
        }
      }
      const long double n_right = rows.size() - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const long double gain = node_score(left, n_left, lambda) +
                               node_score(total - left, n_right, lambda) -
                               node_score(total, rows.size(), lambda);
      if (gain > 0 && (!best.valid || gain > best.gain)) {
        best = {true, static_cast<double>(gain)};
      }
    }
  }
  return best;
}

// Rows of the training set that pass through `node` of `tree`.
inline std::vector<int> rows_through(const fplcast::RegressionTree& tree,
                                     const Eigen::MatrixXd& x, int node) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int at = 0;
    while (true) {
      if (at == node) {
        out.push_back(static_cast<int>(i));
        break;
      }
      const auto& n = tree.nodes()[at];
      if (n.is_leaf()) break;
      at = x(i, n.feature) < n.threshold ? n.left : n.right;
    }
  }
  return out;
}

// Shapley values as the average marginal contribution over all M!
// orderings of the players. `value` maps a coalition bitmask to v(S).
template <typename Value>
std::vector<double> shapley_by_permutation(int m, Value value) {
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<long double> phi(m, 0);
  long double count = 0;
  do {
    std::uint32_t mask = 0;
    double previous = value(mask);
    for (int j : order) {
      mask |= 1U << j;
      const double current = value(mask);
      phi[j] += current - previous;
      previous = current;
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  std::vector<double> out(m);
  for (int j = 0; j < m; ++j) out[j] = static_cast<double>(phi[j] / count);
  return out;
}

inline double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

}  // namespace oracle
