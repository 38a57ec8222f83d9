// Test-only exhaustive oracles. Nothing here calls into the code under test.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

/// Inertia of an explicit partition: each block scored against its mean.
inline double block_inertia(const std::vector<std::vector<double>>& points,
                            const std::vector<int>& labels, int k) {
  const std::size_t dim = points.front().size();
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> mean(dim, 0.0);
    int count = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (labels[i] != c) continue;
      ++count;
      for (std::size_t d = 0; d < dim; ++d) mean[d] += points[i][d];
    }
    if (!count) continue;
    for (auto& m : mean) m /= count;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (labels[i] != c) continue;
      for (std::size_t d = 0; d < dim; ++d)
        total += (points[i][d] - mean[d]) * (points[i][d] - mean[d]);
    }
  }
  return total;
}

/// Minimum inertia over all partitions of the points into exactly k
/// non-empty blocks, enumerated as restricted growth strings.
inline double min_partition_inertia(
    const std::vector<std::vector<double>>& points, int k) {
  const int n = static_cast<int>(points.size());
  std::vector<int> labels(n, 0);
  double best = std::numeric_limits<double>::infinity();
  // Recursive enumeration: labels[i] <= max(labels[0..i-1]) + 1.
  auto rec = [&](auto&& self, int i, int used) -> void {
    if (n - i < k - used) return;
    if (i == n) {
      if (used == k) best = std::min(best, block_inertia(points, labels, k));
      return;
    }
    for (int c = 0; c <= std::min(used, k - 1); ++c) {
      labels[i] = c;
      self(self, i + 1, std::max(used, c + 1));
    }
  };
  rec(rec, 0, 0);
  return best;
}

/// Maximum total weight over all injective row->column assignments of a
/// rows x cols matrix (min(rows, cols) pairs).
inline std::int64_t max_assignment(
    const std::vector<std::vector<std::int64_t>>& w) {
  const std::size_t rows = w.size(), cols = w.front().size();
  const bool transpose = rows > cols;
  const std::size_t small = std::min(rows, cols), large = std::max(rows, cols);
  auto at = [&](std::size_t s, std::size_t l) {
    return transpose ? w[l][s] : w[s][l];
  };
  std::vector<std::size_t> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = std::numeric_limits<std::int64_t>::min();
  do {
    std::int64_t total = 0;
    for (std::size_t s = 0; s < small; ++s) total += at(s, perm[s]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
