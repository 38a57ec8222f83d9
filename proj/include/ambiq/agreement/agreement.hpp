#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ambiq/agreement/hungarian.hpp"
#include "ambiq/error.hpp"

namespace ambiq::agreement {

/// Precision / recall / F1 as percentages.
struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_mean(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

/// Round to one decimal, the reporting precision of the tables.
inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

enum class Aggregation {
  /// Mean of per-pair P, R and F1 over Hungarian-aligned pairs.
  macro,
  /// Pooled intersections over pooled cluster sizes of aligned pairs.
  micro,
};

template <class Item>
using Partition = std::vector<std::vector<Item>>;

/// Cluster agreement between two partitions: clusters are aligned by
/// maximum-overlap bipartite matching and scored on the aligned pairs only;
/// unmatched clusters on the larger side are ignored.
template <class Item>
PRF cluster_f1(const Partition<Item>& pred, const Partition<Item>& gold,
               Aggregation agg = Aggregation::macro) {
  if (pred.empty() || gold.empty())
    throw ArgumentError("cluster_f1: empty partition");
  auto as_sets = [](const Partition<Item>& part) {
    std::vector<std::set<Item>> out;
    for (const auto& c : part) {
      if (c.empty()) throw ArgumentError("cluster_f1: empty cluster");
      out.emplace_back(c.begin(), c.end());
    }
    return out;
  };
  const auto ps = as_sets(pred);
  const auto gs = as_sets(gold);

  WeightMatrix overlap(ps.size(), std::vector<std::int64_t>(gs.size(), 0));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < gs.size(); ++j)
      for (const auto& x : ps[i]) overlap[i][j] += gs[j].count(x);

  // Maximum total overlap first. Ties between optimal matchings are broken
  // by the larger sum of pair F1, then precision, then recall, which makes
  // the result independent of cluster order and item names.
  using Wide = __int128;
  constexpr Wide quantum = 1000000;
  const Wide level = static_cast<Wide>(std::min(ps.size(), gs.size())) * quantum + 1;
  auto quantize = [&](double x) { return static_cast<Wide>(std::llround(x * 1e6)); };
  auto composite = [&](std::size_t i, std::size_t j) -> Wide {
    const double inter = static_cast<double>(overlap[i][j]);
    const double p = inter / static_cast<double>(ps[i].size());
    const double r = inter / static_cast<double>(gs[j].size());
    return ((static_cast<Wide>(overlap[i][j]) * level + quantize(harmonic_mean(p, r))) *
                level + quantize(p)) * level + quantize(r);
  };
  const auto row_to_col = detail::assign_max<Wide>(ps.size(), gs.size(), composite);
  Matching m;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (row_to_col[i] < gs.size()) m.pairs.emplace_back(i, row_to_col[i]);

  PRF out;
  if (agg == Aggregation::macro) {
    for (auto [i, j] : m.pairs) {
      const double inter = static_cast<double>(overlap[i][j]);
      const double p = inter / static_cast<double>(ps[i].size());
      const double r = inter / static_cast<double>(gs[j].size());
      out.precision += p;
      out.recall += r;
      out.f1 += harmonic_mean(p, r);
    }
    const double n = static_cast<double>(m.pairs.size());
    out.precision = 100.0 * out.precision / n;
    out.recall = 100.0 * out.recall / n;
    out.f1 = 100.0 * out.f1 / n;
  } else {
    double inter = 0, psize = 0, gsize = 0;
    for (auto [i, j] : m.pairs) {
      inter += static_cast<double>(overlap[i][j]);
      psize += static_cast<double>(ps[i].size());
      gsize += static_cast<double>(gs[j].size());
    }
    out.precision = 100.0 * inter / psize;
    out.recall = 100.0 * inter / gsize;
    out.f1 = harmonic_mean(out.precision, out.recall);
  }
  return out;
}

/// Percentage of shared ids that both annotators marked ambiguous.
template <class Id>
double ambiguity_agreement(const std::map<Id, bool>& a,
                           const std::map<Id, bool>& b) {
  std::size_t shared = 0, both = 0;
  for (const auto& [id, va] : a) {
    auto it = b.find(id);
    if (it == b.end()) continue;
    ++shared;
    if (va && it->second) ++both;
  }
  if (!shared) throw ArgumentError("ambiguity_agreement: no shared ids");
  return 100.0 * static_cast<double>(both) / static_cast<double>(shared);
}

/// Percentage of shared ids on which the two annotators gave the same
/// ambiguity judgement (both ambiguous or both unambiguous).
template <class Id>
double observed_agreement(const std::map<Id, bool>& a,
                          const std::map<Id, bool>& b) {
  std::size_t shared = 0, same = 0;
  for (const auto& [id, va] : a) {
    auto it = b.find(id);
    if (it == b.end()) continue;
    ++shared;
    if (va == it->second) ++same;
  }
  if (!shared) throw ArgumentError("observed_agreement: no shared ids");
  return 100.0 * static_cast<double>(same) / static_cast<double>(shared);
}

struct PairValue {
  std::size_t first = 0;
  std::size_t second = 0;
  double value = 0.0;
};

struct Summary {
  double mean = 0.0;
  /// Population standard deviation over pairs.
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<PairValue> pairs;
};

inline Summary summarize(std::vector<PairValue> pairs) {
  if (pairs.empty()) throw ArgumentError("summarize: no pair values");
  Summary s;
  s.min = s.max = pairs.front().value;
  for (const auto& p : pairs) {
    s.mean += p.value;
    s.min = std::min(s.min, p.value);
    s.max = std::max(s.max, p.value);
  }
  s.mean /= static_cast<double>(pairs.size());
  for (const auto& p : pairs) s.std += (p.value - s.mean) * (p.value - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(pairs.size()));
  s.pairs = std::move(pairs);
  return s;
}

/// Apply `metric` to every unordered annotator pair and summarize.
template <class Annotator, class Metric>
Summary pairwise_summary(const std::vector<Annotator>& annotators,
                         Metric&& metric) {
  if (annotators.size() < 2)
    throw ArgumentError("pairwise_summary: need at least two annotators");
  std::vector<PairValue> pairs;
  for (std::size_t i = 0; i < annotators.size(); ++i)
    for (std::size_t j = i + 1; j < annotators.size(); ++j)
      pairs.push_back({i, j, std::invoke(metric, annotators[i], annotators[j])});
  return summarize(std::move(pairs));
}

}  // namespace ambiq::agreement
