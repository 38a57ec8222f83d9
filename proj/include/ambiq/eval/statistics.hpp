#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ambiq/corpus/types.hpp"
#include "ambiq/error.hpp"

namespace ambiq::eval {

/// One paired binary outcome per item.
using PairedOutcomes = std::vector<std::pair<bool, bool>>;

struct PairedCounts {
  std::size_t both = 0;
  /// a true, b false.
  std::size_t a_only = 0;
  /// a false, b true.
  std::size_t b_only = 0;
  std::size_t neither = 0;

  std::size_t n() const noexcept { return both + a_only + b_only + neither; }
};

inline PairedCounts count_pairs(const PairedOutcomes& outcomes) {
  PairedCounts c;
  for (auto [a, b] : outcomes) {
    if (a && b) ++c.both;
    else if (a) ++c.a_only;
    else if (b) ++c.b_only;
    else ++c.neither;
  }
  return c;
}

enum class McNemarMethod { exact, chi_square };

inline std::string to_string(McNemarMethod m) {
  return m == McNemarMethod::exact ? "exact" : "chi_square";
}

struct McNemarResult {
  std::size_t b = 0;
  std::size_t c = 0;
  double statistic = 0.0;
  double p_value = 1.0;
  McNemarMethod method = McNemarMethod::exact;
  /// No discordant pairs.
  bool degenerate = false;
};

/// Exact two-sided binomial McNemar test below 25 discordant pairs,
/// continuity-corrected chi-square (1 df) from there on.
inline McNemarResult mcnemar(std::size_t b, std::size_t c) {
  McNemarResult r;
  r.b = b;
  r.c = c;
  const std::size_t m = b + c;
  if (m == 0) {
    r.degenerate = true;
    return r;
  }
  if (m < 25) {
    // 2 * P(X <= min(b, c)), X ~ Binomial(m, 1/2); exact in doubles for m < 25.
    const std::size_t k = std::min(b, c);
    double coef = 1.0, tail = 0.0;
    for (std::size_t i = 0; i <= k; ++i) {
      tail += coef;
      coef = coef * static_cast<double>(m - i) / static_cast<double>(i + 1);
    }
    r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(m)));
    r.statistic = static_cast<double>(k);
    return r;
  }
  r.method = McNemarMethod::chi_square;
  const double d = std::fabs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  r.statistic = d * d / static_cast<double>(m);
  r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  return r;
}

inline McNemarResult mcnemar(const PairedOutcomes& outcomes) {
  if (outcomes.empty()) throw ArgumentError("mcnemar: no outcomes");
  const auto counts = count_pairs(outcomes);
  return mcnemar(counts.a_only, counts.b_only);
}

/// Linear-interpolation quantile of sorted data (numpy's default method).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ArgumentError("quantile: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
};

/// Percentile bootstrap interval of the mean of binary outcomes.
inline Interval bootstrap_ci(const std::vector<bool>& outcomes,
                             std::size_t resamples = 10000, double level = 0.95,
                             std::uint64_t seed = 0) {
  if (outcomes.empty()) throw ArgumentError("bootstrap_ci: no outcomes");
  if (resamples == 0) throw ArgumentError("bootstrap_ci: resamples must be >= 1");
  if (!(level > 0.0 && level < 1.0))
    throw ArgumentError("bootstrap_ci: level must be in (0, 1)");
  const std::size_t n = outcomes.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += outcomes[pick(rng)];
    m = static_cast<double>(hits) / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - level;
  return {quantile_sorted(means, alpha / 2.0), quantile_sorted(means, 1.0 - alpha / 2.0)};
}

inline double mean_of(const std::vector<bool>& outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t hits = 0;
  for (bool b : outcomes) hits += b;
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

using LabelPair = std::pair<corpus::OntologyLabel, corpus::OntologyLabel>;

struct CategoryStats {
  std::map<corpus::OntologyLabel, std::size_t> frequency;
  /// Unordered pairs stored with first < second. Every pair seen at least
  /// once is kept; reported_cooccurrence() applies the count > 1 filter.
  std::map<LabelPair, std::size_t> cooccurrence;

  std::size_t pair_count(corpus::OntologyLabel a, corpus::OntologyLabel b) const {
    auto it = cooccurrence.find(a < b ? LabelPair{a, b} : LabelPair{b, a});
    return it == cooccurrence.end() ? 0 : it->second;
  }

  std::map<LabelPair, std::size_t> reported_cooccurrence() const {
    std::map<LabelPair, std::size_t> out;
    for (const auto& [p, c] : cooccurrence)
      if (c > 1) out.emplace(p, c);
    return out;
  }

  /// Labels by descending frequency; ties keep ontology order.
  std::vector<corpus::OntologyLabel> ranked() const {
    std::vector<corpus::OntologyLabel> out;
    for (const auto& [l, c] : frequency)
      if (c > 0) out.push_back(l);
    std::stable_sort(out.begin(), out.end(), [&](auto a, auto b) {
      return frequency.at(a) > frequency.at(b);
    });
    return out;
  }
};

/// Label statistics per example: the label set of an example is the union
/// over its groups.
inline CategoryStats category_stats(const std::vector<corpus::AnswerGrouping>& groupings) {
  CategoryStats s;
  for (const auto& g : groupings) {
    std::set<corpus::OntologyLabel> labels;
    for (const auto& group : g.groups) labels.insert(group.labels.begin(), group.labels.end());
    for (auto l : labels) ++s.frequency[l];
    for (auto a = labels.begin(); a != labels.end(); ++a)
      for (auto b = std::next(a); b != labels.end(); ++b) ++s.cooccurrence[{*a, *b}];
  }
  return s;
}

inline nlohmann::ordered_json to_json(const CategoryStats& s) {
  nlohmann::ordered_json j;
  auto freq = nlohmann::ordered_json::array();
  for (auto l : s.ranked())
    freq.push_back({{"label", std::string(corpus::to_string(l))}, {"count", s.frequency.at(l)}});
  j["frequency"] = std::move(freq);
  auto co = nlohmann::ordered_json::array();
  for (const auto& [p, c] : s.reported_cooccurrence())
    co.push_back({{"a", std::string(corpus::to_string(p.first))},
                  {"b", std::string(corpus::to_string(p.second))},
                  {"count", c}});
  j["cooccurrence"] = std::move(co);
  return j;
}

struct WhyRecord {
  bool ambiguous = false;
  bool dynamic = false;
  bool agentive = false;
};

struct WhyCrosstab {
  /// counts[dynamic][agentive][ambiguous]
  std::array<std::array<std::array<std::size_t, 2>, 2>, 2> counts{};

  std::size_t at(bool dynamic, bool agentive, bool ambiguous) const {
    return counts[dynamic][agentive][ambiguous];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& d : counts)
      for (const auto& a : d) t += a[0] + a[1];
    return t;
  }
};

inline WhyCrosstab why_crosstab(const std::vector<WhyRecord>& records) {
  WhyCrosstab t;
  for (const auto& r : records) ++t.counts[r.dynamic][r.agentive][r.ambiguous];
  return t;
}

/// One human rating of a (question, answer) pair.
struct AcceptabilityJudgment {
  std::string item_id;
  /// e.g. "original", "annotator", "model".
  std::string question_type;
  /// true for the actual answer, false for the distractor.
  bool actual_answer = true;
  corpus::Confidence rating = corpus::Confidence::yes;
  std::optional<corpus::OntologyLabel> category;
};

/// Only an explicit "yes" counts as acceptable.
inline bool acceptable(const AcceptabilityJudgment& j) {
  return j.rating == corpus::Confidence::yes;
}

struct AcceptabilityCell {
  std::size_t n = 0;
  double rate = 0.0;
  Interval ci;
};

struct AcceptabilityRow {
  std::string question_type;
  std::optional<corpus::OntologyLabel> category;
  AcceptabilityCell actual;
  AcceptabilityCell distractor;
  /// Actual vs distractor, paired by item id.
  McNemarResult test;
  std::size_t paired_items = 0;
};

namespace detail {

inline AcceptabilityRow acceptability_row(const std::vector<const AcceptabilityJudgment*>& js,
                                          std::size_t resamples, double level,
                                          std::uint64_t seed) {
  AcceptabilityRow row;
  std::vector<bool> actual, distractor;
  std::map<std::string, std::pair<std::optional<bool>, std::optional<bool>>> paired;
  for (const auto* j : js) {
    (j->actual_answer ? actual : distractor).push_back(acceptable(*j));
    auto& slot = paired[j->item_id];
    (j->actual_answer ? slot.first : slot.second) = acceptable(*j);
  }
  auto cell = [&](const std::vector<bool>& xs) {
    AcceptabilityCell c;
    c.n = xs.size();
    if (!xs.empty()) {
      c.rate = mean_of(xs);
      c.ci = bootstrap_ci(xs, resamples, level, seed);
    }
    return c;
  };
  row.actual = cell(actual);
  row.distractor = cell(distractor);
  PairedOutcomes outcomes;
  for (const auto& [id, p] : paired)
    if (p.first && p.second) outcomes.emplace_back(*p.first, *p.second);
  row.paired_items = outcomes.size();
  if (!outcomes.empty()) row.test = mcnemar(outcomes);
  else row.test.degenerate = true;
  return row;
}

}  // namespace detail

/// Acceptance rates with bootstrap intervals per question type, and per
/// (question type, category) when `by_category` is set.
inline std::vector<AcceptabilityRow> acceptability_summary(
    const std::vector<AcceptabilityJudgment>& judgments, bool by_category = false,
    std::size_t resamples = 10000, double level = 0.95, std::uint64_t seed = 0) {
  using Key = std::pair<std::string, std::optional<corpus::OntologyLabel>>;
  std::map<Key, std::vector<const AcceptabilityJudgment*>> buckets;
  for (const auto& j : judgments) {
    buckets[{j.question_type, std::nullopt}].push_back(&j);
    if (by_category && j.category) buckets[{j.question_type, j.category}].push_back(&j);
  }
  std::vector<AcceptabilityRow> rows;
  for (const auto& [key, js] : buckets) {
    auto row = detail::acceptability_row(js, resamples, level, seed);
    row.question_type = key.first;
    row.category = key.second;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ambiq::eval
