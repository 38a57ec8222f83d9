#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ambiq/corpus/types.hpp"
#include "ambiq/error.hpp"

namespace ambiq::corpus {

inline constexpr int kSchemaVersion = 1;

inline nlohmann::ordered_json to_json(const AnswerGrouping& g) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["question_id"] = g.question_id;
  j["image_id"] = g.context.image_id;
  j["image_uri"] = g.context.image_uri;
  j["original_question"] = g.context.original_question;
  j["ambiguous"] = g.ambiguous;
  j["annotator_id"] = g.annotator_id;
  if (g.skip_reason) j["skip_reason"] = *g.skip_reason;
  auto groups = nlohmann::ordered_json::array();
  for (const auto& grp : g.groups) {
    nlohmann::ordered_json jg;
    jg["rewritten_question"] = grp.rewritten_question;
    jg["answer_texts"] = grp.answer_texts;
    jg["answer_indices"] = std::vector<std::size_t>(grp.member_indices.begin(),
                                                    grp.member_indices.end());
    auto labels = nlohmann::ordered_json::array();
    for (auto l : grp.labels) labels.push_back(std::string(to_string(l)));
    jg["labels"] = std::move(labels);
    groups.push_back(std::move(jg));
  }
  j["groups"] = std::move(groups);
  j["deleted_indices"] = std::vector<std::size_t>(g.deleted_indices.begin(),
                                                  g.deleted_indices.end());
  if (g.context.num_answers) j["num_answers"] = *g.context.num_answers;
  return j;
}

/// Structural decode only; invariants are checked by the caller.
template <class Json>
AnswerGrouping grouping_from_json(const Json& j) {
  AnswerGrouping g;
  if (j.contains("schema_version") &&
      j.at("schema_version").template get<int>() > kSchemaVersion)
    throw ValidationError("schema-version", "unsupported schema_version");
  g.question_id = j.at("question_id").template get<std::string>();
  g.annotator_id = j.value("annotator_id", std::string());
  g.ambiguous = j.at("ambiguous").template get<bool>();
  g.context.image_id = j.value("image_id", std::string());
  g.context.image_uri = j.value("image_uri", std::string());
  g.context.original_question = j.value("original_question", std::string());
  if (j.contains("num_answers"))
    g.context.num_answers = j.at("num_answers").template get<std::size_t>();
  if (j.contains("skip_reason") && !j.at("skip_reason").is_null())
    g.skip_reason = j.at("skip_reason").template get<std::string>();
  if (j.contains("groups")) {
    for (const auto& jg : j.at("groups")) {
      AnswerGroup grp;
      grp.rewritten_question =
          jg.at("rewritten_question").template get<std::string>();
      std::vector<std::size_t> idx =
          jg.at("answer_indices").template get<std::vector<std::size_t>>();
      grp.member_indices.insert(idx.begin(), idx.end());
      if (grp.member_indices.size() != idx.size())
        throw ValidationError("groups-disjoint",
                              "answer index repeated within a group");
      if (jg.contains("answer_texts"))
        grp.answer_texts =
            jg.at("answer_texts").template get<std::vector<std::string>>();
      if (jg.contains("labels"))
        for (const auto& l : jg.at("labels"))
          grp.labels.insert(label_from_string(l.template get<std::string>()));
      g.groups.push_back(std::move(grp));
    }
  }
  if (j.contains("deleted_indices")) {
    auto del = j.at("deleted_indices").template get<std::vector<std::size_t>>();
    g.deleted_indices.insert(del.begin(), del.end());
  }
  return g;
}

inline std::size_t write_jsonl(const std::vector<AnswerGrouping>& groupings,
                               std::ostream& out) {
  for (const auto& g : groupings) {
    validate(g);
    out << to_json(g).dump() << '\n';
  }
  return groupings.size();
}

inline std::size_t export_jsonl(const std::vector<AnswerGrouping>& groupings,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  const auto n = write_jsonl(groupings, out);
  if (!out) throw IoError("write failed: " + path);
  return n;
}

/// Parse and validate one grouping per non-blank line. Errors name the
/// 1-based line number.
inline std::vector<AnswerGrouping> read_jsonl(std::istream& in,
                                              const std::string& name) {
  std::vector<AnswerGrouping> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnswerGrouping g;
    try {
      g = grouping_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(name, lineno, e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(e.invariant(), e.detail(), lineno);
    }
    validate(g, lineno);
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<AnswerGrouping> import_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_jsonl(in, path);
}

}  // namespace ambiq::corpus
