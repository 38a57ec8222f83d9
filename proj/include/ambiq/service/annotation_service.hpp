#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ambiq/agreement/annotations.hpp"
#include "ambiq/clustering/prioritize.hpp"
#include "ambiq/corpus/jsonl.hpp"
#include "ambiq/corpus/normalize.hpp"
#include "ambiq/corpus/splits.hpp"
#include "ambiq/corpus/types.hpp"
#include "ambiq/error.hpp"
#include "ambiq/eval/statistics.hpp"
#include "ambiq/service/event_log.hpp"

namespace ambiq::service {

inline constexpr const char* kDefaultSkipReason = "All answers to the same question";

/// Operation needs a lease the caller does not hold.
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// Caller is not allowed to perform the operation.
class PermissionError : public Error {
 public:
  using Error::Error;
};

/// Milliseconds since the Unix epoch.
using Clock = std::function<std::int64_t()>;

inline std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct ServiceConfig {
  std::chrono::milliseconds lease_ttl = std::chrono::minutes(30);
  /// Distinct annotators each example is served to.
  std::size_t fan_out = 1;
  /// Annotator ids allowed to post vetting edits.
  std::set<std::string> vetters;
  std::optional<corpus::Splits> splits;
  Clock clock = system_clock_ms;
};

struct QueueEntry {
  std::size_t rank = 0;
  corpus::VqaExample example;
  /// Clustering-derived groups, largest first, each with the original
  /// question as its rewrite.
  std::vector<corpus::AnswerGroup> prefill;
};

/// Prefill groups from cluster assignments: descending size, ties by the
/// smallest member index.
inline std::vector<corpus::AnswerGroup> prefill_groups(const corpus::VqaExample& ex,
                                                       const std::vector<std::size_t>& assignments) {
  if (assignments.size() != ex.answers.size())
    throw ArgumentError("prefill for " + ex.question_id + ": " +
                        std::to_string(assignments.size()) + " assignments for " +
                        std::to_string(ex.answers.size()) + " answers");
  std::map<std::size_t, std::set<std::size_t>> by_cluster;
  for (std::size_t i = 0; i < assignments.size(); ++i) by_cluster[assignments[i]].insert(i);
  std::vector<std::set<std::size_t>> groups;
  for (auto& [c, members] : by_cluster) groups.push_back(std::move(members));
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return *a.begin() < *b.begin();
  });
  std::vector<corpus::AnswerGroup> out;
  for (auto& members : groups) {
    corpus::AnswerGroup g;
    g.rewritten_question = ex.question;
    for (auto i : members) g.answer_texts.push_back(ex.answers[i].text);
    g.member_indices = std::move(members);
    out.push_back(std::move(g));
  }
  return out;
}

/// Queue entries in priority order. Examples the prioritizer dropped are
/// not served.
inline std::vector<QueueEntry> build_queue(const std::vector<corpus::VqaExample>& examples,
                                           const clustering::PriorityQueue& queue) {
  std::unordered_map<std::string, const corpus::VqaExample*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.question_id, &ex);
  std::vector<QueueEntry> out;
  for (const auto& item : queue.items) {
    auto it = by_id.find(item.question_id);
    if (it == by_id.end())
      throw IntegrityError("queue item without example", {item.question_id});
    out.push_back({out.size() + 1, *it->second,
                   prefill_groups(*it->second, item.cluster_result.assignments)});
  }
  return out;
}

struct Lease {
  std::string question_id;
  std::string annotator_id;
  std::int64_t issued_at = 0;
  std::int64_t expires_at = 0;
};

struct NextResult {
  /// Empty when the queue is exhausted for this annotator.
  std::optional<QueueEntry> entry;
  std::optional<Lease> lease;
  /// Items still available to this annotator after this one.
  std::size_t remaining = 0;
};

struct ExportFilter {
  bool vetted_only = false;
  std::optional<corpus::SplitName> split;
};

struct ExportSummary {
  /// Distinct question ids with at least one ambiguous record.
  std::size_t n_examples = 0;
  /// Groups over ambiguous records.
  std::size_t n_rewritten_questions = 0;
  /// Mean distinct normalized answers per rewritten question.
  double mean_answers_per_question = 0.0;
};

inline ExportSummary export_summary(const std::vector<corpus::AnswerGrouping>& rows) {
  ExportSummary s;
  std::set<std::string> ids;
  std::size_t answers = 0;
  for (const auto& g : rows) {
    if (!g.ambiguous) continue;
    ids.insert(g.question_id);
    for (const auto& grp : g.groups) {
      ++s.n_rewritten_questions;
      if (grp.answer_texts.empty()) {
        answers += grp.member_indices.size();
      } else {
        std::set<std::string> uniq;
        for (const auto& t : grp.answer_texts) uniq.insert(corpus::normalize_answer(t));
        answers += uniq.size();
      }
    }
  }
  s.n_examples = ids.size();
  if (s.n_rewritten_questions)
    s.mean_answers_per_question =
        static_cast<double>(answers) / static_cast<double>(s.n_rewritten_questions);
  return s;
}

inline nlohmann::ordered_json to_json(const ExportSummary& s) {
  return {{"n_examples", s.n_examples},
          {"n_rewritten_questions", s.n_rewritten_questions},
          {"mean_answers_per_question", s.mean_answers_per_question}};
}

struct ExportResult {
  std::vector<corpus::AnswerGrouping> records;
  ExportSummary summary;

  void write_jsonl(std::ostream& out) const { corpus::write_jsonl(records, out); }
  std::string jsonl() const {
    std::ostringstream ss;
    write_jsonl(ss);
    return ss.str();
  }
};

inline nlohmann::ordered_json to_json(const corpus::VqaExample& ex) {
  nlohmann::ordered_json j;
  j["question_id"] = ex.question_id;
  j["image_id"] = ex.image_id;
  j["image_uri"] = ex.image_uri;
  j["question"] = ex.question;
  auto answers = nlohmann::ordered_json::array();
  for (const auto& a : ex.answers)
    answers.push_back({{"answer", a.text},
                       {"answer_confidence", std::string(corpus::to_string(a.confidence))},
                       {"answer_id", a.source_id}});
  j["answers"] = std::move(answers);
  return j;
}

inline nlohmann::ordered_json to_json(const Lease& l) {
  return {{"question_id", l.question_id},
          {"annotator_id", l.annotator_id},
          {"issued_at", l.issued_at},
          {"expires_at", l.expires_at}};
}

inline nlohmann::ordered_json to_json(const QueueEntry& e) {
  nlohmann::ordered_json j;
  j["rank"] = e.rank;
  j["example"] = to_json(e.example);
  auto groups = nlohmann::ordered_json::array();
  for (const auto& g : e.prefill)
    groups.push_back({{"rewritten_question", g.rewritten_question},
                      {"answer_texts", g.answer_texts},
                      {"answer_indices",
                       std::vector<std::size_t>(g.member_indices.begin(), g.member_indices.end())}});
  j["prefill"] = std::move(groups);
  return j;
}

inline nlohmann::ordered_json to_json(const NextResult& r) {
  nlohmann::ordered_json j;
  j["remaining"] = r.remaining;
  if (r.entry) {
    auto e = to_json(*r.entry);
    for (auto& [k, v] : e.items()) j[k] = v;
  } else {
    j["example"] = nullptr;
  }
  j["lease"] = r.lease ? to_json(*r.lease) : nlohmann::ordered_json();
  return j;
}

namespace detail {

inline std::string rewrite_key(const std::string& q) {
  std::string out;
  for (auto w : corpus::split_words(q)) {
    if (!out.empty()) out += ' ';
    for (char c : w) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace detail

/// Service-level checks on a submitted grouping for a known example:
/// every AnswerGrouping invariant, then distinct rewrites (case and
/// whitespace insensitive).
inline std::optional<corpus::Violation> check_submission(const corpus::AnswerGrouping& g) {
  if (auto v = corpus::check_invariants(g)) return v;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < g.groups.size(); ++i)
    if (!seen.insert(detail::rewrite_key(g.groups[i].rewritten_question)).second)
      return corpus::Violation{"rewrite-distinct",
                               "group " + std::to_string(i) + " repeats another group's question"};
  return std::nullopt;
}

/// Annotation backend. All mutation goes through one mutex: lease
/// acquisition and log appends are serialized and reads see a consistent
/// snapshot.
class AnnotationService {
 public:
  AnnotationService(std::vector<QueueEntry> queue, ServiceConfig config, EventLog log = {})
      : queue_(std::move(queue)), config_(std::move(config)), log_(std::move(log)) {
    if (config_.fan_out < 1) throw ArgumentError("fan_out must be >= 1");
    if (!config_.clock) config_.clock = system_clock_ms;
    for (std::size_t i = 0; i < queue_.size(); ++i)
      if (!index_.emplace(queue_[i].example.question_id, i).second)
        throw ValidationError("question-id-unique",
                              "duplicate queue item " + queue_[i].example.question_id);
    for (std::size_t i = 0; i < log_.events().size(); ++i) index_event(i);
  }

  const ServiceConfig& config() const noexcept { return config_; }

  std::size_t queue_size() const {
    std::lock_guard lock(mu_);
    return queue_.size();
  }

  std::vector<Event> events() const {
    std::lock_guard lock(mu_);
    return log_.events();
  }

  std::optional<QueueEntry> example(const std::string& question_id) const {
    std::lock_guard lock(mu_);
    auto it = index_.find(question_id);
    if (it == index_.end()) return std::nullopt;
    return queue_[it->second];
  }

  NextResult next_example(const std::string& annotator) {
    require_annotator(annotator);
    std::lock_guard lock(mu_);
    const auto now = config_.clock();
    expire(now);
    NextResult r;
    for (std::size_t i = 0; i < queue_.size(); ++i) {
      if (!eligible(i, annotator)) continue;
      if (!r.entry) {
        const auto& qid = queue_[i].example.question_id;
        Lease l{qid, annotator, now, now + config_.lease_ttl.count()};
        leases_[{qid, annotator}] = l;
        r.entry = queue_[i];
        r.lease = l;
      } else {
        ++r.remaining;
      }
    }
    return r;
  }

  std::uint64_t submit(const std::string& annotator, corpus::AnswerGrouping g) {
    require_annotator(annotator);
    std::lock_guard lock(mu_);
    const auto now = config_.clock();
    const auto& entry = known(g.question_id);
    hold_lease(g.question_id, annotator, now);
    own_record(g, annotator);
    prepare(g, entry);
    check(g);
    return record(EventType::annotation, annotator, std::move(g), now);
  }

  std::uint64_t skip(const std::string& annotator, const std::string& question_id,
                     std::optional<std::string> reason = std::nullopt) {
    require_annotator(annotator);
    std::lock_guard lock(mu_);
    const auto now = config_.clock();
    const auto& entry = known(question_id);
    hold_lease(question_id, annotator, now);
    corpus::AnswerGrouping g;
    g.question_id = question_id;
    g.annotator_id = annotator;
    g.ambiguous = false;
    g.skip_reason = reason && !corpus::detail::blank(*reason) ? *reason : kDefaultSkipReason;
    prepare(g, entry);
    check(g);
    return record(EventType::skip, annotator, std::move(g), now);
  }

  /// Privileged edit replacing the latest record of (question_id,
  /// annotator_id). The original stays in the log.
  std::uint64_t vet(const std::string& vetter, corpus::AnswerGrouping g) {
    std::lock_guard lock(mu_);
    if (!config_.vetters.count(vetter))
      throw PermissionError("'" + vetter + "' may not vet annotations");
    if (!latest_.count({g.question_id, g.annotator_id}))
      throw LookupError("no record for question " + g.question_id + " by '" +
                        g.annotator_id + "'");
    if (auto it = index_.find(g.question_id); it != index_.end()) prepare(g, queue_[it->second]);
    check(g);
    return record(EventType::vet, vetter, std::move(g), config_.clock());
  }

  /// Latest event per (question_id, annotator_id), ordered by that key.
  ExportResult export_dataset(const ExportFilter& filter = {}) const {
    std::lock_guard lock(mu_);
    return export_locked(filter);
  }

  agreement::PoolAgreement live_agreement() const {
    std::vector<corpus::AnswerGrouping> own;
    {
      std::lock_guard lock(mu_);
      for (const auto& [key, idx] : own_latest_) own.push_back(log_.events()[idx].record);
    }
    return agreement::pool_agreement(agreement::pool_by_annotator(own));
  }

  eval::CategoryStats stats() const {
    return eval::category_stats(export_dataset().records);
  }

 private:
  using Key = std::pair<std::string, std::string>;

  static void require_annotator(const std::string& a) {
    if (a.empty()) throw ArgumentError("annotator id is required");
  }

  void index_event(std::size_t i) {
    const auto& e = log_.events()[i];
    const Key key{e.record.question_id, e.record.annotator_id};
    latest_[key] = i;
    if (e.type != EventType::vet) {
      own_latest_[key] = i;
      done_.insert(key);
      leases_.erase(key);
    }
  }

  void expire(std::int64_t now) {
    std::erase_if(leases_, [&](const auto& kv) { return kv.second.expires_at <= now; });
  }

  bool eligible(std::size_t i, const std::string& annotator) const {
    const auto& qid = queue_[i].example.question_id;
    if (done_.count({qid, annotator}) || leases_.count({qid, annotator})) return false;
    std::size_t taken = 0;
    for (auto it = done_.lower_bound({qid, ""}); it != done_.end() && it->first == qid; ++it) ++taken;
    for (auto it = leases_.lower_bound({qid, ""}); it != leases_.end() && it->first.first == qid; ++it)
      if (!done_.count(it->first)) ++taken;
    return taken < config_.fan_out;
  }

  const QueueEntry& known(const std::string& qid) const {
    auto it = index_.find(qid);
    if (it == index_.end()) throw LookupError("unknown question " + qid);
    return queue_[it->second];
  }

  void hold_lease(const std::string& qid, const std::string& annotator, std::int64_t now) const {
    auto it = leases_.find({qid, annotator});
    if (it == leases_.end())
      throw ConflictError("'" + annotator + "' holds no lease on question " + qid);
    if (it->second.expires_at <= now)
      throw ConflictError("lease on question " + qid + " for '" + annotator + "' has expired");
  }

  static void own_record(corpus::AnswerGrouping& g, const std::string& annotator) {
    if (g.annotator_id.empty()) g.annotator_id = annotator;
    if (g.annotator_id != annotator)
      throw PermissionError("record annotator '" + g.annotator_id + "' does not match caller '" +
                            annotator + "'");
  }

  /// Server-side context; answer texts filled in where the client left
  /// them out.
  static void prepare(corpus::AnswerGrouping& g, const QueueEntry& entry) {
    const auto& ex = entry.example;
    g.context = {ex.image_id, ex.image_uri, ex.question, ex.answers.size()};
    for (auto& grp : g.groups) {
      if (!grp.answer_texts.empty() || grp.member_indices.empty() ||
          *grp.member_indices.rbegin() >= ex.answers.size())
        continue;
      for (auto i : grp.member_indices) grp.answer_texts.push_back(ex.answers[i].text);
    }
  }

  static void check(const corpus::AnswerGrouping& g) {
    if (auto v = check_submission(g)) throw ValidationError(v->invariant, v->detail);
  }

  std::uint64_t record(EventType type, const std::string& actor, corpus::AnswerGrouping g,
                       std::int64_t now) {
    const auto seq = log_.append({0, type, now, actor, std::move(g)}).seq;
    index_event(log_.size() - 1);
    return seq;
  }

  ExportResult export_locked(const ExportFilter& filter) const {
    if (filter.split && !config_.splits)
      throw ArgumentError("split filter requested but no splits are configured");
    ExportResult out;
    for (const auto& [key, idx] : latest_) {
      const auto& e = log_.events()[idx];
      if (filter.vetted_only && e.type != EventType::vet) continue;
      if (filter.split && config_.splits->split_of(key.first) != filter.split) continue;
      out.records.push_back(e.record);
    }
    out.summary = export_summary(out.records);
    return out;
  }

  std::vector<QueueEntry> queue_;
  ServiceConfig config_;
  EventLog log_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<Key, Lease> leases_;
  std::set<Key> done_;
  std::map<Key, std::size_t> latest_;
  std::map<Key, std::size_t> own_latest_;
  mutable std::mutex mu_;
};

}  // namespace ambiq::service
