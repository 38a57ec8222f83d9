#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "ambiq/clustering/kmeans.hpp"
#include "ambiq/corpus/normalize.hpp"
#include "ambiq/corpus/types.hpp"
#include "ambiq/embeddings.hpp"
#include "ambiq/parallel.hpp"

namespace ambiq::clustering {

/// True when every answer, normalized with punctuation stripped, is "yes"
/// or "no".
inline bool is_yes_no_only(const corpus::VqaExample& example) {
  if (example.answers.empty()) return false;
  for (const auto& a : example.answers) {
    const auto norm = corpus::normalize_answer(a.text, {.strip_punctuation = true});
    if (norm != "yes" && norm != "no") return false;
  }
  return true;
}

enum class SortPolicy {
  /// Ascending score, then descending balance.
  score_then_balance,
  /// Descending balance, then ascending score.
  balance_then_score,
};

inline SortPolicy sort_policy_from_string(const std::string& s) {
  if (s == "score_then_balance") return SortPolicy::score_then_balance;
  if (s == "balance_then_score") return SortPolicy::balance_then_score;
  throw ArgumentError("unknown sort policy '" + s + "'");
}

inline std::string to_string(SortPolicy p) {
  return p == SortPolicy::score_then_balance ? "score_then_balance"
                                             : "balance_then_score";
}

struct PrioritizeConfig {
  /// nullopt selects default_penalty() per example.
  std::optional<double> penalty;
  std::size_t k_max = 5;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  SortPolicy sort_policy = SortPolicy::score_then_balance;
  std::size_t jobs = 1;
};

struct PriorityItem {
  std::string question_id;
  ClusterResult cluster_result;
  double penalty = 0.0;
  /// Answers whose words were all out of vocabulary.
  std::size_t oov_answers = 0;

  double score() const noexcept { return cluster_result.score; }
  double balance() const noexcept { return cluster_result.balance; }
};

struct PriorityQueue {
  std::vector<PriorityItem> items;
  std::vector<std::string> dropped_yes_no;
  std::vector<std::string> quarantined;
  /// Answers are normalized before the yes/no test.
  bool normalized_before_yes_no = true;
};

/// Answer points for clustering; all-OOV answers become zero vectors.
inline std::vector<Point> embed_answers(const corpus::VqaExample& example,
                                        const embeddings::EmbeddingTable& table,
                                        std::size_t* oov_answers = nullptr) {
  std::vector<Point> points;
  std::size_t oov = 0;
  for (const auto& a : example.answers) {
    const auto norm = corpus::normalize_answer(a.text);
    if (norm.empty()) {
      points.emplace_back(table.dim(), 0.0);
      ++oov;
      continue;
    }
    auto v = embeddings::embed_answer(table, norm);
    if (v.all_oov()) ++oov;
    points.push_back(std::move(v.vector));
  }
  if (oov_answers) *oov_answers = oov;
  return points;
}

inline bool ranks_before(const PriorityItem& a, const PriorityItem& b,
                         SortPolicy policy) {
  if (policy == SortPolicy::score_then_balance) {
    if (a.score() != b.score()) return a.score() < b.score();
    if (a.balance() != b.balance()) return a.balance() > b.balance();
  } else {
    if (a.balance() != b.balance()) return a.balance() > b.balance();
    if (a.score() != b.score()) return a.score() < b.score();
  }
  return a.question_id < b.question_id;
}

/// Build the annotation priority queue. Per-example work may run on
/// `config.jobs` threads; the output does not depend on the thread count.
inline PriorityQueue prioritize(const std::vector<corpus::VqaExample>& examples,
                                const embeddings::EmbeddingTable& table,
                                const PrioritizeConfig& config) {
  struct Slot {
    enum { kept, yes_no, quarantined } kind = kept;
    PriorityItem item;
  };
  std::vector<Slot> slots(examples.size());

  auto work = [&](std::size_t i) {
    const auto& ex = examples[i];
    auto& slot = slots[i];
    slot.item.question_id = ex.question_id;
    if (is_yes_no_only(ex)) {
      slot.kind = Slot::yes_no;
      return;
    }
    std::size_t oov = 0;
    auto points = embed_answers(ex, table, &oov);
    if (points.empty() || oov == points.size()) {
      slot.kind = Slot::quarantined;
      return;
    }
    const double penalty = config.penalty ? *config.penalty : default_penalty(points);
    const std::size_t k_max = std::min(config.k_max, points.size());
    slot.item.cluster_result =
        select_k(points, k_max, penalty, config.restarts, config.seed);
    slot.item.penalty = penalty;
    slot.item.oov_answers = oov;
  };

  parallel_for(examples.size(), config.jobs, work);

  PriorityQueue q;
  for (auto& s : slots) {
    switch (s.kind) {
      case Slot::yes_no: q.dropped_yes_no.push_back(s.item.question_id); break;
      case Slot::quarantined: q.quarantined.push_back(s.item.question_id); break;
      case Slot::kept: q.items.push_back(std::move(s.item)); break;
    }
  }
  std::sort(q.items.begin(), q.items.end(),
            [&](const auto& a, const auto& b) {
              return ranks_before(a, b, config.sort_policy);
            });
  return q;
}

inline nlohmann::ordered_json to_json(const PriorityItem& item) {
  nlohmann::ordered_json j;
  j["question_id"] = item.question_id;
  j["score"] = item.score();
  j["balance"] = item.balance();
  j["k"] = item.cluster_result.k;
  j["inertia"] = item.cluster_result.inertia;
  j["penalty"] = item.penalty;
  j["assignments"] = item.cluster_result.assignments;
  j["oov_answers"] = item.oov_answers;
  return j;
}

}  // namespace ambiq::clustering
