#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "ambiq/agreement/agreement.hpp"
#include "ambiq/clustering/kmeans.hpp"
#include "ambiq/clustering/prioritize.hpp"
#include "ambiq/corpus/types.hpp"
#include "ambiq/embeddings.hpp"
#include "ambiq/error.hpp"
#include "ambiq/eval/representations.hpp"
#include "ambiq/parallel.hpp"

namespace ambiq::eval {

using IndexPartition = agreement::Partition<std::size_t>;

/// One gold-annotated example as the harness sees it. Items are the answer
/// indices that appear in some gold group; deleted answers are not scored.
struct GoldExample {
  std::string question_id;
  std::vector<std::size_t> items;
  std::map<std::size_t, std::string> texts;
  IndexPartition gold;
};

/// Throws ArgumentError when the grouping has no gold groups.
inline GoldExample gold_example(const corpus::AnswerGrouping& g) {
  if (g.groups.empty())
    throw ArgumentError("example " + g.question_id + " has no gold groups");
  GoldExample ex;
  ex.question_id = g.question_id;
  for (const auto& grp : g.groups) {
    std::vector<std::size_t> members(grp.member_indices.begin(), grp.member_indices.end());
    for (std::size_t i = 0; i < members.size(); ++i) {
      ex.items.push_back(members[i]);
      ex.texts[members[i]] = i < grp.answer_texts.size() ? grp.answer_texts[i] : std::string();
    }
    ex.gold.push_back(std::move(members));
  }
  std::sort(ex.items.begin(), ex.items.end());
  return ex;
}

inline IndexPartition drop_empty(std::vector<std::vector<std::size_t>> clusters) {
  IndexPartition out;
  for (auto& c : clusters)
    if (!c.empty()) out.push_back(std::move(c));
  return out;
}

/// Cluster id in [0, k) for each of n items, independently uniform.
inline std::vector<std::size_t> random_assignments(std::size_t n, std::size_t k,
                                                   std::uint64_t seed) {
  if (k < 1 || k > n)
    throw ArgumentError("baseline_random: K=" + std::to_string(k) + " outside [1, " +
                        std::to_string(n) + "]");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  std::vector<std::size_t> out(n);
  for (auto& a : out) a = pick(rng);
  return out;
}

inline IndexPartition partition_from_assignments(const std::vector<std::size_t>& items,
                                                 const std::vector<std::size_t>& assignments,
                                                 std::size_t k) {
  std::vector<std::vector<std::size_t>> clusters(k);
  for (std::size_t i = 0; i < items.size(); ++i) clusters[assignments[i]].push_back(items[i]);
  return drop_empty(std::move(clusters));
}

/// Random baseline; empty clusters are dropped before scoring.
inline IndexPartition baseline_random(const std::vector<std::size_t>& items, std::size_t k,
                                      std::uint64_t seed) {
  return partition_from_assignments(items, random_assignments(items.size(), k, seed), k);
}

inline IndexPartition baseline_perfect_precision(const std::vector<std::size_t>& items) {
  IndexPartition out;
  for (auto i : items) out.push_back({i});
  return out;
}

inline IndexPartition baseline_perfect_recall(const std::vector<std::size_t>& items) {
  return {items};
}

/// The initial clustering annotators were shown: mean-pooled word vectors
/// with k chosen by the penalized inertia sweep.
inline IndexPartition glove_initial(const GoldExample& ex, const embeddings::EmbeddingTable& table,
                                    const clustering::PrioritizeConfig& config) {
  corpus::VqaExample vqa;
  vqa.question_id = ex.question_id;
  for (auto i : ex.items) vqa.answers.push_back({ex.texts.at(i), corpus::Confidence::yes, ""});
  const auto points = clustering::embed_answers(vqa, table);
  const double penalty = config.penalty ? *config.penalty : clustering::default_penalty(points);
  const auto r = clustering::select_k(points, std::min(config.k_max, points.size()), penalty,
                                      config.restarts, config.seed);
  return partition_from_assignments(ex.items, r.assignments, r.k);
}

/// k-means over externally produced answer representations.
inline IndexPartition cluster_representations(const RepresentationFile& reps,
                                              const std::string& question_id,
                                              const std::vector<std::size_t>& items,
                                              std::size_t k, std::uint64_t seed,
                                              std::size_t restarts = 10) {
  if (k < 1 || k > items.size())
    throw ArgumentError("cluster_representations: K=" + std::to_string(k) + " outside [1, " +
                        std::to_string(items.size()) + "]");
  std::vector<clustering::Point> points;
  for (auto i : items) points.push_back(reps.at(question_id, i));
  const auto r = clustering::kmeans(points, k, restarts, seed);
  return partition_from_assignments(items, r.assignments, k);
}

struct Method {
  std::string name;
  /// Stochastic methods are averaged over EvalOptions::seeds runs.
  bool stochastic = false;
  std::function<IndexPartition(const GoldExample&, std::uint64_t seed)> run;
};

inline Method random_method() {
  return {"Random", true, [](const GoldExample& ex, std::uint64_t seed) {
            return baseline_random(ex.items, ex.gold.size(), seed);
          }};
}
inline Method perfect_precision_method() {
  return {"Perfect P", false,
          [](const GoldExample& ex, std::uint64_t) { return baseline_perfect_precision(ex.items); }};
}
inline Method perfect_recall_method() {
  return {"Perfect R", false,
          [](const GoldExample& ex, std::uint64_t) { return baseline_perfect_recall(ex.items); }};
}
inline Method glove_initial_method(const embeddings::EmbeddingTable& table,
                                   clustering::PrioritizeConfig config) {
  return {"GloVe initial", false,
          [&table, config](const GoldExample& ex, std::uint64_t) {
            return glove_initial(ex, table, config);
          }};
}
inline Method representations_method(std::string name, const RepresentationFile& reps,
                                     std::size_t restarts = 10) {
  return {std::move(name), false, [&reps, restarts](const GoldExample& ex, std::uint64_t seed) {
            return cluster_representations(reps, ex.question_id, ex.items, ex.gold.size(), seed,
                                           restarts);
          }};
}

struct EvalOptions {
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
  /// Weight each example by its number of scored answers instead of equally.
  bool weight_by_answers = false;
  agreement::Aggregation aggregation = agreement::Aggregation::macro;
  std::size_t jobs = 1;
};

struct MethodRow {
  std::string method;
  agreement::PRF avg;
  std::size_t examples = 0;
  std::size_t runs = 1;
};

struct Skipped {
  std::string question_id;
  std::string reason;
};

struct EvalReport {
  std::vector<MethodRow> rows;
  std::vector<Skipped> skipped;
};

/// Per-example seed, independent of evaluation order and thread count.
inline std::uint64_t example_seed(std::uint64_t base, std::uint64_t run, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (run + 1) + 0xbf58476d1ce4e5b9ULL * index;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per-example cluster F1 against gold, averaged over examples, one row per
/// method. Examples without gold groups are skipped and reported.
inline EvalReport evaluate_clustering(const std::vector<corpus::AnswerGrouping>& gold,
                                      const std::vector<Method>& methods,
                                      const EvalOptions& opts = {}) {
  EvalReport report;
  std::vector<GoldExample> examples;
  for (const auto& g : gold) {
    if (g.groups.empty()) {
      report.skipped.push_back({g.question_id, "no gold groups"});
      continue;
    }
    examples.push_back(gold_example(g));
  }
  if (examples.empty()) throw ArgumentError("evaluate_clustering: no gold examples");

  for (const auto& m : methods) {
    const std::size_t runs = m.stochastic ? std::max<std::size_t>(1, opts.seeds) : 1;
    std::vector<agreement::PRF> scores(examples.size() * runs);
    parallel_for(scores.size(), opts.jobs, [&](std::size_t t) {
      const std::size_t run = t / examples.size(), i = t % examples.size();
      const auto pred = m.run(examples[i], example_seed(opts.seed, run, i));
      scores[t] = agreement::cluster_f1(pred, examples[i].gold, opts.aggregation);
    });

    MethodRow row{m.name, {}, examples.size(), runs};
    double total_weight = 0.0;
    for (std::size_t t = 0; t < scores.size(); ++t) {
      const auto& ex = examples[t % examples.size()];
      const double w = opts.weight_by_answers ? static_cast<double>(ex.items.size()) : 1.0;
      row.avg.precision += w * scores[t].precision;
      row.avg.recall += w * scores[t].recall;
      row.avg.f1 += w * scores[t].f1;
      total_weight += w;
    }
    row.avg.precision /= total_weight;
    row.avg.recall /= total_weight;
    row.avg.f1 /= total_weight;
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"method", row.method},
                         {"avg_p", row.avg.precision},
                         {"avg_r", row.avg.recall},
                         {"avg_f1", row.avg.f1},
                         {"examples", row.examples},
                         {"runs", row.runs}});
  j["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : r.skipped)
    j["skipped"].push_back({{"question_id", s.question_id}, {"reason", s.reason}});
  return j;
}

}  // namespace ambiq::eval
