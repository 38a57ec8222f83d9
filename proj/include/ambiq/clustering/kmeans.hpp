#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "ambiq/error.hpp"

namespace ambiq::clustering {

using Point = std::vector<double>;

struct KMeansOptions {
  std::size_t max_iterations = 300;
  /// k-means++ weighted seeding instead of uniform distinct points.
  bool plus_plus = false;
  /// Keep the per-iteration inertia of the winning run.
  bool record_trace = false;
};

struct ClusterResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  std::vector<Point> centroids;
  double inertia = 0.0;
  /// inertia + penalty * k; equals inertia when produced by kmeans().
  double score = 0.0;
  double balance = 1.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_trace;

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }

  /// Member indices per cluster, empty clusters omitted.
  std::vector<std::vector<std::size_t>> partition() const {
    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t i = 0; i < assignments.size(); ++i)
      groups[assignments[i]].push_back(i);
    std::erase_if(groups, [](const auto& g) { return g.empty(); });
    return groups;
  }
};

inline double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

/// Sum of squared distances from each point to the mean of its cluster.
inline double partition_inertia(const std::vector<Point>& points,
                                const std::vector<std::size_t>& assignments,
                                std::size_t k) {
  const std::size_t dim = points.front().size();
  std::vector<Point> sums(k, Point(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++counts[assignments[i]];
    for (std::size_t d = 0; d < dim; ++d) sums[assignments[i]][d] += points[i][d];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c])
      for (auto& x : sums[c]) x /= static_cast<double>(counts[c]);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    total += squared_distance(points[i], sums[assignments[i]]);
  return total;
}

namespace detail {

inline void check_points(const std::vector<Point>& points, std::size_t k) {
  if (points.empty()) throw ArgumentError("kmeans: no points");
  if (k == 0) throw ArgumentError("kmeans: k must be positive");
  if (k > points.size())
    throw ArgumentError("kmeans: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(points.size()) + " points");
  const auto dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw ArgumentError("kmeans: mixed dimensionality");
}

/// C(n, k) saturated at `cap`.
inline std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k,
                                     std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (acc > static_cast<long double>(cap)) return cap;
  }
  return static_cast<std::uint64_t>(std::llround(acc));
}

/// Advance a sorted k-subset of [0, n) to its lexicographic successor.
inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  for (std::size_t i = k; i-- > 0;) {
    if (idx[i] < n - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

inline std::vector<std::size_t> random_init(std::size_t n, std::size_t k,
                                            std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(k);
  return order;
}

inline std::vector<std::size_t> plus_plus_init(const std::vector<Point>& points,
                                               std::size_t k,
                                               std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<std::size_t> chosen;
  chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n);
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (auto c : chosen) best = std::min(best, squared_distance(points[i], points[c]));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      // All remaining points coincide with a centre: take the first unused.
      while (std::find(chosen.begin(), chosen.end(), pick) != chosen.end()) ++pick;
    } else {
      std::discrete_distribution<std::size_t> dist(d2.begin(), d2.end());
      pick = dist(rng);
    }
    chosen.push_back(pick);
  }
  return chosen;
}

/// One Lloyd run from the given initial centre indices.
inline ClusterResult lloyd(const std::vector<Point>& points,
                           const std::vector<std::size_t>& init,
                           const KMeansOptions& opts) {
  const std::size_t n = points.size();
  const std::size_t k = init.size();
  const std::size_t dim = points.front().size();

  ClusterResult r;
  r.k = k;
  for (auto i : init) r.centroids.push_back(points[i]);
  r.assignments.assign(n, std::numeric_limits<std::size_t>::max());

  std::vector<std::size_t> next(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(points[i], r.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points[i], r.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      next[i] = best;
      dist[i] = best_d;
    }

    // Empty clusters take the point farthest from its centre, drawn from a
    // cluster that can spare it.
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : next) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c]) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (sizes[next[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
      if (far == n) break;
      --sizes[next[far]];
      next[far] = c;
      ++sizes[c];
      dist[far] = 0.0;
      r.centroids[c] = points[far];
    }

    if (opts.record_trace)
      r.inertia_trace.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
    r.iterations = iter + 1;
    const bool converged = next == r.assignments;
    r.assignments = next;
    if (converged) break;

    for (auto& c : r.centroids) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dim; ++d) r.centroids[next[i]][d] += points[i][d];
    for (std::size_t c = 0; c < k; ++c)
      for (auto& x : r.centroids[c]) x /= static_cast<double>(sizes[c]);
  }

  // Final centres are the member means of the final assignment.
  std::vector<std::size_t> sizes(k, 0);
  for (auto& c : r.centroids) std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ++sizes[r.assignments[i]];
    for (std::size_t d = 0; d < dim; ++d)
      r.centroids[r.assignments[i]][d] += points[i][d];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (sizes[c])
      for (auto& x : r.centroids[c]) x /= static_cast<double>(sizes[c]);
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    r.inertia += squared_distance(points[i], r.centroids[r.assignments[i]]);
  r.score = r.inertia;
  return r;
}

}  // namespace detail

/// Best of `restarts` Lloyd runs by inertia. When `restarts` is at least the
/// number of distinct k-subsets of the points, every subset is tried once
/// as the initial centres instead of sampling.
inline ClusterResult kmeans(const std::vector<Point>& points, std::size_t k,
                            std::size_t restarts, std::uint64_t seed,
                            const KMeansOptions& opts = {}) {
  detail::check_points(points, k);
  if (restarts == 0) throw ArgumentError("kmeans: restarts must be positive");

  const std::size_t n = points.size();
  ClusterResult best;
  bool have = false;
  auto consider = [&](ClusterResult r) {
    if (!have || r.inertia < best.inertia) {
      best = std::move(r);
      have = true;
    }
  };

  const auto subsets = detail::binomial_capped(n, k, restarts + 1);
  if (!opts.plus_plus && subsets <= restarts) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    do {
      consider(detail::lloyd(points, idx, opts));
    } while (detail::next_combination(idx, n));
  } else {
    std::mt19937_64 rng(seed);
    for (std::size_t r = 0; r < restarts; ++r) {
      auto init = opts.plus_plus ? detail::plus_plus_init(points, k, rng)
                                 : detail::random_init(n, k, rng);
      consider(detail::lloyd(points, init, opts));
    }
  }
  best.balance = 1.0;
  return best;
}

/// Normalized entropy of the cluster sizes, H(sizes / n) / log(k); 1 for k = 1.
inline double balance_score(const ClusterResult& result) {
  if (result.k <= 1) return 1.0;
  const auto sizes = result.cluster_sizes();
  const double n = static_cast<double>(result.assignments.size());
  double h = 0.0;
  for (auto s : sizes) {
    if (!s) continue;
    const double p = static_cast<double>(s) / n;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(result.k));
}

/// Mean squared distance to the global centroid, divided by 4.
inline double default_penalty(const std::vector<Point>& points) {
  if (points.empty()) return 0.0;
  const std::vector<std::size_t> one(points.size(), 0);
  return partition_inertia(points, one, 1) / static_cast<double>(points.size()) /
         4.0;
}

/// Sweep k = 1..k_max and keep the result minimizing inertia + penalty * k.
/// Ties go to the smaller k.
inline ClusterResult select_k(const std::vector<Point>& points,
                              std::size_t k_max, double penalty,
                              std::size_t restarts, std::uint64_t seed,
                              const KMeansOptions& opts = {}) {
  if (k_max == 0) throw ArgumentError("select_k: k_max must be positive");
  if (penalty < 0) throw ArgumentError("select_k: penalty must be >= 0");
  detail::check_points(points, k_max);

  ClusterResult best;
  for (std::size_t k = 1; k <= k_max; ++k) {
    auto r = kmeans(points, k, restarts, seed + k, opts);
    r.score = r.inertia + penalty * static_cast<double>(k);
    if (k == 1 || r.score < best.score) best = std::move(r);
  }
  best.balance = balance_score(best);
  return best;
}

}  // namespace ambiq::clustering
