#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "ambiq/corpus/types.hpp"
#include "ambiq/corpus/vqa_io.hpp"
#include "ambiq/error.hpp"

namespace ambiq::corpus {

inline std::string to_string(SplitName s) { return s == SplitName::dev ? "dev" : "test"; }

inline SplitName split_name_from_string(const std::string& s) {
  if (s == "dev") return SplitName::dev;
  if (s == "test") return SplitName::test;
  throw ArgumentError("unknown split '" + s + "'");
}

struct Splits {
  DatasetSplit dev{SplitName::dev, {}};
  DatasetSplit test{SplitName::test, {}};

  const DatasetSplit& get(SplitName s) const { return s == SplitName::dev ? dev : test; }

  std::optional<SplitName> split_of(const std::string& question_id) const {
    if (dev.question_ids.count(question_id)) return SplitName::dev;
    if (test.question_ids.count(question_id)) return SplitName::test;
    return std::nullopt;
  }
};

inline void check_disjoint(const Splits& s) {
  for (const auto& id : s.dev.question_ids)
    if (s.test.question_ids.count(id))
      throw ValidationError("split-disjoint", "question " + id + " is in both dev and test");
}

/// Seeded split: ids are sorted and deduplicated, shuffled with the seed,
/// and the first n_dev go to dev.
inline Splits make_splits(std::vector<std::string> ids, std::size_t n_dev, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (n_dev > ids.size())
    throw ArgumentError("n_dev " + std::to_string(n_dev) + " exceeds " +
                        std::to_string(ids.size()) + " questions");
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(ids[i - 1], ids[pick(rng)]);
  }
  Splits s;
  for (std::size_t i = 0; i < ids.size(); ++i)
    (i < n_dev ? s.dev : s.test).question_ids.insert(ids[i]);
  return s;
}

inline nlohmann::ordered_json to_json(const Splits& s) {
  nlohmann::ordered_json j;
  j["dev"] = std::vector<std::string>(s.dev.question_ids.begin(), s.dev.question_ids.end());
  j["test"] = std::vector<std::string>(s.test.question_ids.begin(), s.test.question_ids.end());
  return j;
}

/// {"dev": [ids], "test": [ids]}
inline Splits load_splits(const std::string& path) {
  const auto doc = detail::parse_json_file(path);
  Splits s;
  try {
    for (const auto& id : doc.at("dev")) s.dev.question_ids.insert(detail::id_string(id));
    for (const auto& id : doc.at("test")) s.test.question_ids.insert(detail::id_string(id));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  check_disjoint(s);
  return s;
}

}  // namespace ambiq::corpus
