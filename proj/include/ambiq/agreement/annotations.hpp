#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ambiq/agreement/agreement.hpp"
#include "ambiq/corpus/types.hpp"

namespace ambiq::agreement {

/// Annotations keyed by annotator, then question id. Later rows replace
/// earlier ones for the same (annotator, question).
struct AnnotatorPool {
  std::vector<std::string> annotators;
  std::vector<std::map<std::string, corpus::AnswerGrouping>> records;
};

inline AnnotatorPool pool_by_annotator(const std::vector<corpus::AnswerGrouping>& rows) {
  std::map<std::string, std::map<std::string, corpus::AnswerGrouping>> by;
  for (const auto& g : rows) by[g.annotator_id][g.question_id] = g;
  AnnotatorPool pool;
  for (auto& [a, recs] : by) {
    pool.annotators.push_back(a);
    pool.records.push_back(std::move(recs));
  }
  return pool;
}

/// Cluster F1 between two groupings of the same example. Both partitions
/// are restricted to the answers grouped by both annotators.
inline std::optional<PRF> grouping_cluster_f1(const corpus::AnswerGrouping& pred,
                                              const corpus::AnswerGrouping& gold,
                                              Aggregation agg = Aggregation::macro) {
  std::set<std::size_t> in_pred, common;
  for (const auto& g : pred.groups) in_pred.insert(g.member_indices.begin(), g.member_indices.end());
  for (const auto& g : gold.groups)
    for (auto i : g.member_indices)
      if (in_pred.count(i)) common.insert(i);
  auto restrict = [&](const corpus::AnswerGrouping& x) {
    Partition<std::size_t> out;
    for (const auto& g : x.groups) {
      std::vector<std::size_t> c;
      for (auto i : g.member_indices)
        if (common.count(i)) c.push_back(i);
      if (!c.empty()) out.push_back(std::move(c));
    }
    return out;
  };
  if (common.empty()) return std::nullopt;
  return cluster_f1(restrict(pred), restrict(gold), agg);
}

struct PairDetail {
  std::size_t first = 0;
  std::size_t second = 0;
  std::size_t shared = 0;
  /// Shared examples both annotators grouped.
  std::size_t clustered = 0;
};

struct PoolAgreement {
  std::vector<std::string> annotators;
  std::vector<PairDetail> pairs;
  /// Empty when no two annotators share an example.
  std::optional<Summary> ambiguity;
  /// Empty when no pair shares an example both marked ambiguous.
  std::optional<Summary> cluster;

  bool empty_overlap() const noexcept { return !ambiguity; }
};

/// Ambiguity agreement and mean per-example cluster F1 for every annotator
/// pair with at least one shared example.
inline PoolAgreement pool_agreement(const AnnotatorPool& pool,
                                    Aggregation agg = Aggregation::macro) {
  PoolAgreement out;
  out.annotators = pool.annotators;
  std::vector<PairValue> amb, clu;
  for (std::size_t i = 0; i < pool.records.size(); ++i)
    for (std::size_t j = i + 1; j < pool.records.size(); ++j) {
      const auto& a = pool.records[i];
      const auto& b = pool.records[j];
      std::map<std::string, bool> fa, fb;
      PairDetail d{i, j, 0, 0};
      double f1 = 0.0;
      for (const auto& [qid, ga] : a) {
        auto it = b.find(qid);
        if (it == b.end()) continue;
        ++d.shared;
        fa[qid] = ga.ambiguous;
        fb[qid] = it->second.ambiguous;
        if (!ga.ambiguous || !it->second.ambiguous) continue;
        if (auto prf = grouping_cluster_f1(it->second, ga, agg)) {
          f1 += prf->f1;
          ++d.clustered;
        }
      }
      if (!d.shared) continue;
      out.pairs.push_back(d);
      amb.push_back({i, j, ambiguity_agreement(fa, fb)});
      if (d.clustered) clu.push_back({i, j, f1 / static_cast<double>(d.clustered)});
    }
  if (!amb.empty()) out.ambiguity = summarize(std::move(amb));
  if (!clu.empty()) out.cluster = summarize(std::move(clu));
  return out;
}

inline nlohmann::ordered_json to_json(const Summary& s,
                                      const std::vector<std::string>& names) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["min"] = s.min;
  j["max"] = s.max;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : s.pairs)
    pairs.push_back({{"a", names[p.first]}, {"b", names[p.second]}, {"value", p.value}});
  j["pairs"] = std::move(pairs);
  return j;
}

inline nlohmann::ordered_json to_json(const PoolAgreement& r) {
  nlohmann::ordered_json j;
  j["status"] = r.empty_overlap() ? "empty-overlap" : "ok";
  j["annotators"] = r.annotators;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"a", r.annotators[p.first]},
                     {"b", r.annotators[p.second]},
                     {"shared", p.shared},
                     {"clustered", p.clustered}});
  j["pairs"] = std::move(pairs);
  j["ambiguity"] = r.ambiguity ? to_json(*r.ambiguity, r.annotators) : nlohmann::ordered_json();
  j["cluster_f1"] = r.cluster ? to_json(*r.cluster, r.annotators) : nlohmann::ordered_json();
  return j;
}

}  // namespace ambiq::agreement
