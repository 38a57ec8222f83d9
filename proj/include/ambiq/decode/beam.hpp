#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ambiq/decode/constraints.hpp"
#include "ambiq/decode/scorer.hpp"
#include "ambiq/error.hpp"

namespace ambiq::decode {

struct Hypothesis {
  TokenSeq tokens;
  double log_score = 0.0;
  std::size_t bank = 0;
  std::vector<PhraseTrie::State> match_state;
};

/// Higher score, then shorter, then smaller token ids.
inline bool better(const TokenSeq& a, double sa, const TokenSeq& b, double sb) {
  if (sa != sb) return sa > sb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

inline bool better(const Hypothesis& a, const Hypothesis& b) {
  return better(a.tokens, a.log_score, b.tokens, b.log_score);
}

struct SearchResult {
  /// Includes the end token when finished.
  TokenSeq tokens;
  double log_score = 0.0;
  bool finished = false;
  /// Best bank-complete hypothesis that never emitted the end token.
  bool incomplete = false;
  std::size_t steps = 0;
};

class SearchExhausted : public Error {
 public:
  explicit SearchExhausted(Hypothesis best)
      : Error("constrained search: no hypothesis satisfied every constraint set"),
        best_(std::move(best)) {}
  const Hypothesis& best_partial() const noexcept { return best_; }

 private:
  Hypothesis best_;
};

struct BeamOptions {
  std::size_t beam_size = 5;
  /// Maximum output length, end token included.
  std::size_t max_len = 20;
  /// Scorer candidates per hypothesis; 0 means beam_size.
  std::size_t top_k = 0;
};

namespace detail {

inline void check_options(const BeamOptions& o) {
  if (o.beam_size < 1) throw ArgumentError("beam_size must be >= 1");
  if (o.max_len < 1) throw ArgumentError("max_len must be >= 1");
}

/// Highest-scoring token ids, ties to the smaller id.
inline std::vector<TokenId> top_tokens(const std::vector<double>& lp, std::size_t k,
                                       std::optional<TokenId> exclude) {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < lp.size(); ++i)
    if (!exclude || static_cast<TokenId>(i) != *exclude) ids.push_back(static_cast<TokenId>(i));
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](TokenId a, TokenId b) {
                      if (lp[a] != lp[b]) return lp[a] > lp[b];
                      return a < b;
                    });
  ids.resize(k);
  return ids;
}

inline std::vector<double> scored(const TokenScorer& scorer, const TokenSeq& prefix) {
  auto lp = scorer.score(prefix);
  check_distribution(lp, scorer.vocab_size());
  return lp;
}

/// Beam slots per bank: an even split with the remainder going to the
/// highest banks, then slots a bank cannot fill handed to the other banks,
/// higher banks first.
inline std::vector<std::size_t> allocate(std::size_t beam, const std::vector<std::size_t>& avail) {
  const std::size_t banks = avail.size();
  std::vector<std::size_t> alloc(banks, beam / banks);
  for (std::size_t r = 0; r < beam % banks; ++r) ++alloc[banks - 1 - r];
  std::size_t spare = 0;
  for (std::size_t b = 0; b < banks; ++b)
    if (alloc[b] > avail[b]) {
      spare += alloc[b] - avail[b];
      alloc[b] = avail[b];
    }
  for (std::size_t b = banks; b-- > 0 && spare;) {
    const std::size_t add = std::min(spare, avail[b] - alloc[b]);
    alloc[b] += add;
    spare -= add;
  }
  return alloc;
}

}  // namespace detail

/// Plain beam search: top-k expansion, finished hypotheses leave the beam,
/// stop once the best finished score is at least the best live score.
inline SearchResult beam_search(const TokenScorer& scorer, const BeamOptions& opts) {
  detail::check_options(opts);
  const TokenId end = scorer.end_token();
  const std::size_t k = opts.top_k ? opts.top_k : opts.beam_size;
  std::vector<Hypothesis> live{Hypothesis{}};
  std::optional<Hypothesis> best_finished;
  SearchResult res;

  for (std::size_t step = 0; step < opts.max_len && !live.empty(); ++step) {
    res.steps = step + 1;
    std::vector<Hypothesis> next;
    for (const auto& h : live) {
      const auto lp = detail::scored(scorer, h.tokens);
      for (auto t : detail::top_tokens(lp, k, std::nullopt)) {
        Hypothesis c{h.tokens, h.log_score + lp[t], 0, {}};
        c.tokens.push_back(t);
        if (t == end) {
          if (!best_finished || better(c, *best_finished)) best_finished = std::move(c);
        } else {
          next.push_back(std::move(c));
        }
      }
    }
    std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return better(a, b); });
    if (next.size() > opts.beam_size) next.resize(opts.beam_size);
    live = std::move(next);
    if (best_finished && (live.empty() || best_finished->log_score >= live.front().log_score))
      break;
  }
  if (best_finished) {
    res.tokens = best_finished->tokens;
    res.log_score = best_finished->log_score;
    res.finished = true;
  } else if (!live.empty()) {
    res.tokens = live.front().tokens;
    res.log_score = live.front().log_score;
    res.incomplete = true;
  }
  return res;
}

/// Lexically constrained beam search with dynamic beam allocation. Every
/// constraint set must be satisfied before the end token may be emitted.
inline SearchResult constrained_beam_search(const TokenScorer& scorer,
                                            const std::vector<ConstraintSet>& sets,
                                            const BeamOptions& opts) {
  detail::check_options(opts);
  const TokenId end = scorer.end_token();
  check_constraints(sets, end, scorer.vocab_size());
  const std::size_t k = opts.top_k ? opts.top_k : opts.beam_size;
  std::vector<PhraseTrie> tries;
  for (const auto& s : sets) tries.emplace_back(s);

  Hypothesis root;
  root.match_state.resize(sets.size());
  std::vector<Hypothesis> live{root};
  std::optional<Hypothesis> best_finished;
  std::optional<Hypothesis> best_partial;
  SearchResult res;

  for (std::size_t step = 0; step < opts.max_len && !live.empty(); ++step) {
    res.steps = step + 1;
    std::vector<Hypothesis> next;
    for (const auto& h : live) {
      const auto lp = detail::scored(scorer, h.tokens);
      const bool complete = h.bank == sets.size();
      auto cands = detail::top_tokens(lp, k, complete ? std::nullopt : std::optional{end});
      for (std::size_t i = 0; i < tries.size(); ++i)
        for (auto t : tries[i].continuations(h.match_state[i])) cands.push_back(t);
      std::sort(cands.begin(), cands.end());
      cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

      for (auto t : cands) {
        Hypothesis c{h.tokens, h.log_score + lp[t], 0, {}};
        c.tokens.push_back(t);
        if (t == end) {
          c.bank = h.bank;
          c.match_state = h.match_state;
          if (!best_finished || better(c, *best_finished)) best_finished = std::move(c);
          continue;
        }
        c.match_state.reserve(tries.size());
        for (std::size_t i = 0; i < tries.size(); ++i) {
          c.match_state.push_back(tries[i].advance(h.match_state[i], t));
          c.bank += c.match_state.back().satisfied;
        }
        next.push_back(std::move(c));
      }
    }

    std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return better(a, b); });
    for (const auto& c : next)
      if (!best_partial || c.bank > best_partial->bank ||
          (c.bank == best_partial->bank && better(c, *best_partial)))
        best_partial = c;

    std::vector<std::vector<Hypothesis>> banks(sets.size() + 1);
    for (auto& c : next) banks[c.bank].push_back(std::move(c));
    std::vector<std::size_t> avail;
    for (const auto& b : banks) avail.push_back(b.size());
    const auto alloc = detail::allocate(opts.beam_size, avail);
    live.clear();
    for (std::size_t b = 0; b < banks.size(); ++b)
      for (std::size_t i = 0; i < alloc[b]; ++i) live.push_back(std::move(banks[b][i]));
    std::sort(live.begin(), live.end(), [](const auto& a, const auto& b) { return better(a, b); });

    if (best_finished && (live.empty() || best_finished->log_score >= live.front().log_score))
      break;
  }

  if (best_finished) {
    res.tokens = best_finished->tokens;
    res.log_score = best_finished->log_score;
    res.finished = true;
    return res;
  }
  for (const auto& h : live)
    if (h.bank == sets.size()) {
      res.tokens = h.tokens;
      res.log_score = h.log_score;
      res.incomplete = true;
      return res;
    }
  throw SearchExhausted(best_partial ? *best_partial : root);
}

}  // namespace ambiq::decode
