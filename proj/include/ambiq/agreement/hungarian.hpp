#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "ambiq/error.hpp"

namespace ambiq::agreement {

using WeightMatrix = std::vector<std::vector<std::int64_t>>;

struct Matching {
  /// (row, column) pairs sorted by row.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::int64_t total_overlap = 0;
};

namespace detail {

template <class T>
constexpr T max_value() {
  if constexpr (std::numeric_limits<T>::is_specialized) {
    return std::numeric_limits<T>::max();
  } else {
    // __int128 without GNU extensions.
    T half = T(1) << (sizeof(T) * 8 - 2);
    return half - 1 + half;
  }
}

/// Kuhn-Munkres with potentials on a rows x cols weight matrix padded to
/// square with zero-weight dummies. Maximizes total weight; returns the
/// matched column of each real row (or cols when matched to a dummy).
template <class T, class WeightFn>
std::vector<std::size_t> assign_max(std::size_t rows, std::size_t cols,
                                    WeightFn&& weight) {
  const std::size_t n = std::max(rows, cols);
  T max_w = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) max_w = std::max(max_w, weight(i, j));
  auto cost = [&](std::size_t i, std::size_t j) -> T {
    return max_w - ((i < rows && j < cols) ? weight(i, j) : T(0));
  };

  // 1-based; p[j] is the row assigned to column j, p[0] the row being added.
  const T inf = max_value<T>() / 4;
  std::vector<T> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<T> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      T delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const T cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    } while (j0);
  }

  std::vector<std::size_t> row_to_col(rows, cols);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] - 1 < rows) row_to_col[p[j] - 1] = j - 1 < cols ? j - 1 : cols;
  return row_to_col;
}

inline void check_matrix(const WeightMatrix& w) {
  if (w.empty() || w.front().empty())
    throw ArgumentError("hungarian_max: empty matrix");
  for (const auto& r : w) {
    if (r.size() != w.front().size())
      throw ArgumentError("hungarian_max: ragged matrix");
    for (auto x : r)
      if (x < 0) throw ArgumentError("hungarian_max: negative weight");
  }
}

}  // namespace detail

/// Maximum-weight bipartite matching (Hungarian algorithm). Rectangular
/// inputs are padded with zero-weight dummies that are dropped from the
/// result, so exactly min(rows, cols) pairs come back.
inline Matching hungarian_max(const WeightMatrix& w) {
  detail::check_matrix(w);
  const std::size_t rows = w.size(), cols = w.front().size();
  const auto match = detail::assign_max<std::int64_t>(
      rows, cols, [&](std::size_t i, std::size_t j) { return w[i][j]; });
  Matching m;
  for (std::size_t i = 0; i < rows; ++i) {
    if (match[i] >= cols) continue;
    m.pairs.emplace_back(i, match[i]);
    m.total_overlap += w[i][match[i]];
  }
  return m;
}

}  // namespace ambiq::agreement
