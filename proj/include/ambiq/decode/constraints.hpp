#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ambiq/decode/scorer.hpp"
#include "ambiq/error.hpp"

namespace ambiq::decode {

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};

/// "token<TAB>tag" per line, blank line between sentences.
inline std::vector<TaggedSentence> read_pos_tags(std::istream& in, const std::string& name) {
  std::vector<TaggedSentence> out;
  TaggedSentence cur;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!cur.tokens.empty()) out.push_back(std::move(cur));
      cur = {};
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(name, lineno, "expected token<TAB>tag");
    cur.tokens.push_back(line.substr(0, tab));
    cur.tags.push_back(line.substr(tab + 1));
  }
  if (!cur.tokens.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<TaggedSentence> load_pos_tags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_pos_tags(in, path);
}

/// Fixture tagger: "NN" for words in the noun list (case-insensitive),
/// "X" otherwise.
class LexiconTagger {
 public:
  explicit LexiconTagger(std::set<std::string> nouns) {
    for (const auto& n : nouns) nouns_.insert(lower(n));
  }

  TaggedSentence tag(const std::vector<std::string>& tokens) const {
    TaggedSentence s{tokens, {}};
    for (const auto& t : tokens) s.tags.push_back(nouns_.count(lower(t)) ? "NN" : "X");
    return s;
  }

 private:
  static std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
  std::set<std::string> nouns_;
};

inline bool is_noun_tag(const std::string& tag) {
  static const std::set<std::string> tags{"NN", "NNS", "NNP", "NNPS", "NOUN", "PROPN"};
  return tags.count(tag) > 0;
}

struct NounSpan {
  std::string text;
  /// Token range [begin, end) in the source question.
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const NounSpan&) const = default;
};

/// Maximal runs of noun-tagged tokens, in order, first occurrence of each
/// surface text kept.
inline std::vector<NounSpan> extract_noun_spans(const std::vector<std::string>& tokens,
                                                const std::vector<std::string>& tags) {
  if (tokens.size() != tags.size())
    throw ArgumentError("extract_noun_spans: " + std::to_string(tokens.size()) + " tokens but " +
                        std::to_string(tags.size()) + " tags");
  std::vector<NounSpan> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tokens.size();) {
    if (!is_noun_tag(tags[i])) {
      ++i;
      continue;
    }
    NounSpan s{tokens[i], i, i + 1};
    while (s.end < tokens.size() && is_noun_tag(tags[s.end])) s.text += " " + tokens[s.end++];
    if (seen.insert(s.text).second) out.push_back(s);
    i = s.end;
  }
  return out;
}

/// Satisfied when at least one alternative occurs contiguously.
struct ConstraintSet {
  std::vector<TokenSeq> alternatives;
};

struct CompiledConstraints {
  std::vector<ConstraintSet> sets;
  /// Span texts that tokenized to nothing.
  std::vector<std::string> dropped;
};

/// One disjunctive set over all spans; no spans gives no constraints.
inline CompiledConstraints compile_constraints(
    const std::vector<NounSpan>& spans,
    const std::function<std::optional<TokenSeq>(const std::string&)>& tokenize) {
  CompiledConstraints out;
  ConstraintSet set;
  for (const auto& s : spans) {
    auto toks = tokenize(s.text);
    if (!toks || toks->empty()) {
      out.dropped.push_back(s.text);
      continue;
    }
    if (std::find(set.alternatives.begin(), set.alternatives.end(), *toks) ==
        set.alternatives.end())
      set.alternatives.push_back(std::move(*toks));
  }
  if (!set.alternatives.empty()) out.sets.push_back(std::move(set));
  return out;
}

inline void check_constraints(const std::vector<ConstraintSet>& sets, TokenId end,
                              std::size_t vocab) {
  for (const auto& s : sets) {
    if (s.alternatives.empty())
      throw ValidationError("constraint-nonempty", "constraint set without alternatives");
    for (const auto& alt : s.alternatives) {
      if (alt.empty())
        throw ValidationError("constraint-nonempty", "empty constraint phrase");
      for (auto t : alt) {
        if (t == end)
          throw ValidationError("constraint-no-end", "constraint phrase contains the end token");
        if (t < 0 || static_cast<std::size_t>(t) >= vocab)
          throw ValidationError("constraint-vocab", "token id " + std::to_string(t) +
                                                        " outside vocabulary");
      }
    }
  }
}

/// Trie over one set's alternatives. A match state is the set of trie nodes
/// reached by partial matches currently in progress, so overlapping prefixes
/// are tracked simultaneously.
class PhraseTrie {
 public:
  explicit PhraseTrie(const ConstraintSet& set) : nodes_(1) {
    for (const auto& alt : set.alternatives) {
      std::size_t n = 0;
      for (auto t : alt) {
        auto it = nodes_[n].next.find(t);
        if (it == nodes_[n].next.end()) {
          nodes_.emplace_back();
          it = nodes_[n].next.emplace(t, nodes_.size() - 1).first;
        }
        n = it->second;
      }
      nodes_[n].terminal = true;
    }
  }

  struct State {
    bool satisfied = false;
    /// Sorted non-root nodes of live partial matches.
    std::vector<std::size_t> active;

    bool operator==(const State&) const = default;
  };

  State advance(const State& s, TokenId t) const {
    if (s.satisfied) return s;
    State out;
    auto step = [&](std::size_t n) {
      auto it = nodes_[n].next.find(t);
      if (it == nodes_[n].next.end()) return;
      if (nodes_[it->second].terminal) out.satisfied = true;
      out.active.push_back(it->second);
    };
    step(0);
    for (auto n : s.active) step(n);
    if (out.satisfied) {
      out.active.clear();
      return out;
    }
    std::sort(out.active.begin(), out.active.end());
    out.active.erase(std::unique(out.active.begin(), out.active.end()), out.active.end());
    return out;
  }

  /// Tokens that extend a live partial match or start a new one.
  std::vector<TokenId> continuations(const State& s) const {
    std::vector<TokenId> out;
    if (s.satisfied) return out;
    for (const auto& [t, n] : nodes_[0].next) out.push_back(t);
    for (auto a : s.active)
      for (const auto& [t, n] : nodes_[a].next) out.push_back(t);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  struct Node {
    std::map<TokenId, std::size_t> next;
    bool terminal = false;
  };
  std::vector<Node> nodes_;
};

/// Independent check: every set has an alternative as a contiguous run.
inline bool satisfies(const TokenSeq& seq, const std::vector<ConstraintSet>& sets) {
  for (const auto& s : sets) {
    bool any = false;
    for (const auto& alt : s.alternatives)
      if (!alt.empty() && std::search(seq.begin(), seq.end(), alt.begin(), alt.end()) != seq.end()) {
        any = true;
        break;
      }
    if (!any) return false;
  }
  return true;
}

}  // namespace ambiq::decode
