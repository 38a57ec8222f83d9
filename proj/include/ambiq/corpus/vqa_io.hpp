#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "ambiq/corpus/types.hpp"
#include "ambiq/error.hpp"

namespace ambiq::corpus {

/// Disagreement reason code marking an example as ambiguous.
inline constexpr const char* kAmbiguityFlag = "AMB";

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json parse_json_file(const std::string& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, e.byte, e.what());
  }
}

/// VQAv2 ids are integers; other dumps use strings. Both map to strings.
inline std::string id_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return v.dump();
}

inline const nlohmann::json& require_array(const nlohmann::json& doc,
                                           const char* key,
                                           const std::string& path) {
  if (!doc.is_object() || !doc.contains(key) || !doc.at(key).is_array())
    throw ParseError(path, 0, std::string("missing array '") + key + "'");
  return doc.at(key);
}

}  // namespace detail

/// Join a VQAv2 questions file with its annotations file. Output follows
/// the questions file order; answers keep their original order.
inline std::vector<VqaExample> load_vqa(const std::string& questions_path,
                                        const std::string& annotations_path) {
  const auto qdoc = detail::parse_json_file(questions_path);
  const auto adoc = detail::parse_json_file(annotations_path);
  const auto& questions = detail::require_array(qdoc, "questions", questions_path);
  const auto& annotations =
      detail::require_array(adoc, "annotations", annotations_path);

  std::vector<VqaExample> out;
  std::unordered_map<std::string, std::size_t> by_id;
  try {
    for (const auto& q : questions) {
      VqaExample ex;
      ex.question_id = detail::id_string(q.at("question_id"));
      ex.image_id = detail::id_string(q.at("image_id"));
      ex.question = q.at("question").get<std::string>();
      ex.image_uri = q.contains("image_uri")
                         ? q.at("image_uri").get<std::string>()
                         : "coco:" + ex.image_id;
      if (!by_id.emplace(ex.question_id, out.size()).second)
        throw ValidationError("question-id-unique",
                              "duplicate question_id " + ex.question_id);
      out.push_back(std::move(ex));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(questions_path, 0, e.what());
  }

  std::vector<std::string> unknown;
  std::set<std::string> answered;
  try {
    for (const auto& a : annotations) {
      const auto qid = detail::id_string(a.at("question_id"));
      auto it = by_id.find(qid);
      if (it == by_id.end()) {
        unknown.push_back(qid);
        continue;
      }
      answered.insert(qid);
      auto& ex = out[it->second];
      for (const auto& ans : a.at("answers")) {
        AnswerRecord rec;
        rec.text = ans.at("answer").get<std::string>();
        rec.confidence = ans.contains("answer_confidence")
                             ? confidence_from_string(
                                   ans.at("answer_confidence").get<std::string>())
                             : Confidence::yes;
        rec.source_id = ans.contains("answer_id")
                            ? detail::id_string(ans.at("answer_id"))
                            : std::to_string(ex.answers.size() + 1);
        ex.answers.push_back(std::move(rec));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(annotations_path, 0, e.what());
  }
  if (!unknown.empty())
    throw IntegrityError("question_id in annotations but not in questions",
                         unknown);

  std::vector<std::string> missing;
  for (const auto& ex : out)
    if (!answered.count(ex.question_id)) missing.push_back(ex.question_id);
  if (!missing.empty())
    throw IntegrityError("question_id without annotations", missing);
  return out;
}

using ReasonLabels = std::map<std::string, std::set<std::string>>;

/// Disagreement labels as a JSON object {question_id: [reason, ...]}.
inline ReasonLabels load_reason_labels(const std::string& path) {
  const auto doc = detail::parse_json_file(path);
  if (!doc.is_object()) throw ParseError(path, 0, "expected a JSON object");
  ReasonLabels out;
  for (const auto& [qid, reasons] : doc.items()) {
    auto& set = out[qid];
    for (const auto& r : reasons) set.insert(r.get<std::string>());
  }
  return out;
}

struct SubsetReport {
  std::vector<VqaExample> examples;
  std::size_t unlabeled = 0;
  std::size_t not_flagged = 0;
};

inline SubsetReport filter_ambiguous_subset(
    const std::vector<VqaExample>& examples, const ReasonLabels& labels,
    const std::string& flag = kAmbiguityFlag) {
  SubsetReport report;
  for (const auto& ex : examples) {
    auto it = labels.find(ex.question_id);
    if (it == labels.end()) {
      ++report.unlabeled;
    } else if (it->second.count(flag)) {
      report.examples.push_back(ex);
    } else {
      ++report.not_flagged;
    }
  }
  return report;
}

struct ConfidenceFilterResult {
  VqaExample example;
  /// kept_from[new_index] = original index.
  std::vector<std::size_t> kept_from;
  /// remap[original_index] = new index, or nullopt when dropped.
  std::vector<std::optional<std::size_t>> remap;

  bool empty() const noexcept { return example.answers.empty(); }
};

/// Keep answers rated "yes" or "maybe".
inline ConfidenceFilterResult filter_answers_by_confidence(
    const VqaExample& example) {
  ConfidenceFilterResult r;
  r.example = example;
  r.example.answers.clear();
  r.remap.assign(example.answers.size(), std::nullopt);
  for (std::size_t i = 0; i < example.answers.size(); ++i) {
    if (example.answers[i].confidence == Confidence::no) continue;
    r.remap[i] = r.example.answers.size();
    r.kept_from.push_back(i);
    r.example.answers.push_back(example.answers[i]);
  }
  return r;
}

}  // namespace ambiq::corpus
