#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ambiq/corpus/normalize.hpp"
#include "ambiq/error.hpp"

namespace ambiq::embeddings {

/// Word -> dense vector map with a fixed dimensionality. Immutable once
/// loaded, so a single table can be shared between threads.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ArgumentError("embedding dim must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  std::size_t duplicate_count() const noexcept { return duplicates_; }

  /// Insert `word`. Returns false (and counts a duplicate) when the word is
  /// already present; the first vector is kept.
  bool insert(std::string word, std::vector<double> vec) {
    if (vec.size() != dim_)
      throw ArgumentError("vector for '" + word + "' has length " +
                          std::to_string(vec.size()) + ", expected " +
                          std::to_string(dim_));
    auto [it, inserted] = vectors_.try_emplace(std::move(word), std::move(vec));
    if (!inserted) ++duplicates_;
    return inserted;
  }

  const std::vector<double>* find(std::string_view word) const {
    auto it = vectors_.find(std::string(word));
    return it == vectors_.end() ? nullptr : &it->second;
  }

  const std::vector<double>& at(std::string_view word) const {
    if (auto* v = find(word)) return *v;
    throw LookupError("no embedding for '" + std::string(word) + "'");
  }

  /// Copy with every vector multiplied by `c`.
  EmbeddingTable scaled(double c) const {
    EmbeddingTable out(*this);
    for (auto& [w, v] : out.vectors_)
      for (auto& x : v) x *= c;
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::size_t duplicates_ = 0;
};

/// Read GloVe text format: "word f1 ... fd" per line. The dimensionality is
/// taken from the first row unless `expected_dim` is given.
inline EmbeddingTable read_embedding_table(
    std::istream& in, const std::string& name,
    std::optional<std::size_t> expected_dim = std::nullopt) {
  std::optional<EmbeddingTable> table;
  std::string line;
  std::vector<double> row;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) continue;

    const auto cut = line.find(' ');
    if (cut == std::string::npos)
      throw ParseError(name, lineno, "row has no vector components");
    std::string word = line.substr(0, cut);

    row.clear();
    const char* p = line.data() + cut;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' '))
        throw ParseError(name, lineno, "bad number in row for '" + word + "'");
      row.push_back(v);
      p = next;
    }

    if (!table) {
      if (expected_dim && row.size() != *expected_dim)
        throw ParseError(name, lineno,
                         "dimension mismatch: file has " +
                             std::to_string(row.size()) + ", expected " +
                             std::to_string(*expected_dim));
      if (row.empty()) throw ParseError(name, lineno, "empty vector");
      table.emplace(row.size());
    }
    if (row.size() != table->dim())
      throw ParseError(name, lineno,
                       "row has " + std::to_string(row.size()) +
                           " components, expected " +
                           std::to_string(table->dim()));
    table->insert(std::move(word), row);
  }
  if (!table) {
    if (!expected_dim) throw ParseError(name, 0, "embedding file is empty");
    table.emplace(*expected_dim);
  }
  return std::move(*table);
}

inline EmbeddingTable load_embedding_table(
    const std::string& path,
    std::optional<std::size_t> expected_dim = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_embedding_table(in, path, expected_dim);
}

struct AnswerVector {
  std::vector<double> vector;
  double oov_fraction = 0.0;

  bool all_oov() const noexcept { return oov_fraction >= 1.0; }
};

/// Mean of the in-vocabulary word vectors of an already normalized answer.
/// OOV words are skipped; an all-OOV answer maps to the zero vector.
inline AnswerVector embed_answer(const EmbeddingTable& table,
                                 std::string_view answer_text) {
  const auto words = corpus::split_words(answer_text);
  if (words.empty()) throw ArgumentError("cannot embed an empty answer");

  AnswerVector out;
  out.vector.assign(table.dim(), 0.0);
  std::size_t found = 0;
  for (const auto& w : words) {
    const auto* v = table.find(w);
    if (!v) continue;
    ++found;
    for (std::size_t d = 0; d < table.dim(); ++d) out.vector[d] += (*v)[d];
  }
  if (found)
    for (auto& x : out.vector) x /= static_cast<double>(found);
  out.oov_fraction =
      static_cast<double>(words.size() - found) / static_cast<double>(words.size());
  return out;
}

}  // namespace ambiq::embeddings
