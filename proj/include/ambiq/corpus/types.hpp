#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ambiq/error.hpp"

namespace ambiq::corpus {

enum class Confidence { yes, maybe, no };

inline constexpr std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::yes: return "yes";
    case Confidence::maybe: return "maybe";
    case Confidence::no: return "no";
  }
  return "no";
}

inline Confidence confidence_from_string(std::string_view s) {
  if (s == "yes") return Confidence::yes;
  if (s == "maybe") return Confidence::maybe;
  if (s == "no") return Confidence::no;
  throw ValidationError("confidence-value",
                        "unknown answer confidence '" + std::string(s) + "'");
}

struct AnswerRecord {
  std::string text;
  Confidence confidence = Confidence::yes;
  std::string source_id;

  bool operator==(const AnswerRecord&) const = default;
};

struct VqaExample {
  std::string question_id;
  std::string image_id;
  std::string image_uri;
  std::string question;
  std::vector<AnswerRecord> answers;

  bool operator==(const VqaExample&) const = default;
};

/// Reasons an example is ambiguous. The order and the serialized names are
/// part of the exchange format and must not change.
enum class OntologyLabel {
  Location,
  Time,
  Kind,
  Cause,
  Purpose,
  Goal,
  Direction,
  Manner,
  MultipleOptions,
  Grouping,
  Uncertainty,
  AnnotatorMistake,
  BadQuestionOrImage,
};

inline constexpr std::array<OntologyLabel, 13> kAllLabels = {
    OntologyLabel::Location,         OntologyLabel::Time,
    OntologyLabel::Kind,             OntologyLabel::Cause,
    OntologyLabel::Purpose,          OntologyLabel::Goal,
    OntologyLabel::Direction,        OntologyLabel::Manner,
    OntologyLabel::MultipleOptions,  OntologyLabel::Grouping,
    OntologyLabel::Uncertainty,      OntologyLabel::AnnotatorMistake,
    OntologyLabel::BadQuestionOrImage,
};

inline constexpr std::string_view to_string(OntologyLabel l) {
  constexpr std::array<std::string_view, 13> names = {
      "Location",        "Time",     "Kind",        "Cause",
      "Purpose",         "Goal",     "Direction",   "Manner",
      "MultipleOptions", "Grouping", "Uncertainty", "AnnotatorMistake",
      "BadQuestionOrImage"};
  return names[static_cast<std::size_t>(l)];
}

inline OntologyLabel label_from_string(std::string_view s) {
  for (auto l : kAllLabels)
    if (to_string(l) == s) return l;
  throw ValidationError("label-value",
                        "unknown ontology label '" + std::string(s) + "'");
}

struct AnswerGroup {
  std::string rewritten_question;
  std::set<std::size_t> member_indices;
  std::set<OntologyLabel> labels;
  /// Answer strings in member_indices order. Optional: empty means unknown.
  std::vector<std::string> answer_texts;

  bool operator==(const AnswerGroup&) const = default;
};

/// Example context carried alongside a grouping in the exchange format.
struct ExampleContext {
  std::string image_id;
  std::string image_uri;
  std::string original_question;
  std::optional<std::size_t> num_answers;

  bool operator==(const ExampleContext&) const = default;
};

struct AnswerGrouping {
  std::string question_id;
  std::string annotator_id;
  bool ambiguous = false;
  std::vector<AnswerGroup> groups;
  std::optional<std::string> skip_reason;
  std::set<std::size_t> deleted_indices;
  ExampleContext context;

  bool operator==(const AnswerGrouping&) const = default;
};

enum class SplitName { dev, test };

struct DatasetSplit {
  SplitName name = SplitName::test;
  std::set<std::string> question_ids;
};

/// One violated invariant, by stable name.
struct Violation {
  std::string invariant;
  std::string detail;
};

namespace detail {
inline bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}
}  // namespace detail

/// First violated AnswerGrouping invariant, or nullopt when valid.
inline std::optional<Violation> check_invariants(const AnswerGrouping& g) {
  if (g.ambiguous && g.groups.size() < 2)
    return Violation{"ambiguous-min-groups",
                     "an ambiguous example needs at least two groups"};
  if (!g.ambiguous && !g.groups.empty())
    return Violation{"unambiguous-no-groups",
                     "an unambiguous example must not carry groups"};
  if (!g.ambiguous && !g.skip_reason)
    return Violation{"skip-reason-required",
                     "an unambiguous example needs a skip reason"};

  std::set<std::size_t> seen;
  for (std::size_t gi = 0; gi < g.groups.size(); ++gi) {
    const auto& grp = g.groups[gi];
    if (grp.member_indices.empty())
      return Violation{"group-nonempty",
                       "group " + std::to_string(gi) + " has no answers"};
    if (detail::blank(grp.rewritten_question))
      return Violation{"rewrite-nonempty", "group " + std::to_string(gi) +
                                               " has an empty question"};
    if (!grp.answer_texts.empty() &&
        grp.answer_texts.size() != grp.member_indices.size())
      return Violation{"answer-texts-arity",
                       "group " + std::to_string(gi) +
                           " answer_texts does not match answer_indices"};
    for (auto idx : grp.member_indices) {
      if (!seen.insert(idx).second)
        return Violation{"groups-disjoint", "answer " + std::to_string(idx) +
                                                " appears in two groups"};
    }
  }
  for (auto idx : g.deleted_indices)
    if (seen.count(idx))
      return Violation{"deleted-disjoint",
                       "answer " + std::to_string(idx) +
                           " is both deleted and grouped"};
  if (g.context.num_answers) {
    const auto n = *g.context.num_answers;
    for (auto idx : seen)
      if (idx >= n)
        return Violation{"index-range", "answer index " + std::to_string(idx) +
                                            " out of range"};
    for (auto idx : g.deleted_indices)
      if (idx >= n)
        return Violation{"index-range", "deleted index " +
                                            std::to_string(idx) +
                                            " out of range"};
  }
  return std::nullopt;
}

inline void validate(const AnswerGrouping& g, std::size_t line = 0) {
  if (auto v = check_invariants(g))
    throw ValidationError(v->invariant, v->detail, line);
}

/// Gold partition of answer indices induced by a grouping (deleted answers
/// are not part of it).
inline std::vector<std::vector<std::size_t>> partition_of(
    const AnswerGrouping& g) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(g.groups.size());
  for (const auto& grp : g.groups)
    out.emplace_back(grp.member_indices.begin(), grp.member_indices.end());
  return out;
}

}  // namespace ambiq::corpus
