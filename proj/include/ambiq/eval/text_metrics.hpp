#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ambiq/error.hpp"

namespace ambiq::eval {

using Tokens = std::vector<std::string>;

/// Lowercase, split ASCII punctuation into its own tokens, then split on
/// whitespace. Applied identically to every system under comparison.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char ch : text) {
    if (ch < 0x80 && std::isspace(ch)) {
      flush();
    } else if (ch < 0x80 && std::ispunct(ch)) {
      flush();
      out.emplace_back(1, static_cast<char>(ch));
    } else {
      cur.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch))
                              : static_cast<char>(ch));
    }
  }
  flush();
  return out;
}

using NgramCounts = std::map<Tokens, int>;

inline NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++out[Tokens(tokens.begin() + i, tokens.begin() + i + n)];
  return out;
}

struct BleuOptions {
  int max_n = 4;
  /// Add-one smoothing of the n >= 2 precisions.
  bool smoothing = false;
};

struct BleuScore {
  double score = 0.0;
  std::vector<double> precisions;
  double brevity_penalty = 0.0;
  /// Set when the candidate was empty and the score forced to 0.
  bool empty_candidate = false;
};

/// Clipped n-gram matches and totals, accumulated per order.
struct BleuStats {
  std::vector<double> matches;
  std::vector<double> totals;
  double candidate_length = 0;
  double reference_length = 0;
};

namespace detail {

inline void accumulate_bleu(BleuStats& stats, const Tokens& candidate,
                            const std::vector<Tokens>& references, int max_n) {
  stats.matches.resize(max_n, 0.0);
  stats.totals.resize(max_n, 0.0);
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references)
      for (const auto& [g, c] : ngram_counts(ref, n))
        max_ref[g] = std::max(max_ref[g], c);
    for (const auto& [g, c] : cand) {
      auto it = max_ref.find(g);
      stats.matches[n - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
      stats.totals[n - 1] += c;
    }
  }
  // Closest reference length; ties prefer the shorter reference.
  std::size_t best = references.front().size();
  for (const auto& ref : references) {
    const auto d = [&](std::size_t len) {
      return len > candidate.size() ? len - candidate.size() : candidate.size() - len;
    };
    if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best))
      best = ref.size();
  }
  stats.candidate_length += static_cast<double>(candidate.size());
  stats.reference_length += static_cast<double>(best);
}

inline BleuScore finish_bleu(const BleuStats& stats, const BleuOptions& opts) {
  BleuScore out;
  if (stats.candidate_length == 0) {
    out.empty_candidate = true;
    out.precisions.assign(opts.max_n, 0.0);
    return out;
  }
  // Orders longer than the candidate have no n-grams and are left out of
  // the geometric mean, so bleu(x, {x}) = 1 for short x too.
  double log_sum = 0.0;
  int orders = 0;
  bool zero = false;
  for (int n = 0; n < opts.max_n; ++n) {
    double m = stats.matches[n], t = stats.totals[n];
    if (t == 0.0) {
      out.precisions.push_back(0.0);
      continue;
    }
    if (opts.smoothing && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    const double p = m / t;
    out.precisions.push_back(p);
    ++orders;
    if (p == 0.0) zero = true;
    else log_sum += std::log(p);
  }
  const double c = stats.candidate_length, r = stats.reference_length;
  out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
  out.score = zero ? 0.0 : out.brevity_penalty * std::exp(log_sum / orders);
  return out;
}

}  // namespace detail

/// Sentence BLEU: geometric mean of clipped n-gram precisions 1..max_n
/// times the brevity penalty against the closest reference length.
inline BleuScore bleu(const Tokens& candidate, const std::vector<Tokens>& references,
                      const BleuOptions& opts = {}) {
  if (opts.max_n < 1) throw ArgumentError("bleu: max_n must be >= 1");
  if (references.empty()) throw ArgumentError("bleu: no references");
  BleuStats stats;
  detail::accumulate_bleu(stats, candidate, references, opts.max_n);
  return detail::finish_bleu(stats, opts);
}

/// Corpus BLEU: statistics pooled over all items before combining.
inline BleuScore corpus_bleu(const std::vector<Tokens>& candidates,
                             const std::vector<std::vector<Tokens>>& references,
                             const BleuOptions& opts = {}) {
  if (opts.max_n < 1) throw ArgumentError("bleu: max_n must be >= 1");
  if (candidates.size() != references.size())
    throw ArgumentError("corpus_bleu: candidate/reference count mismatch");
  BleuStats stats;
  stats.matches.assign(opts.max_n, 0.0);
  stats.totals.assign(opts.max_n, 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw ArgumentError("corpus_bleu: item without references");
    detail::accumulate_bleu(stats, candidates[i], references[i], opts.max_n);
  }
  return detail::finish_bleu(stats, opts);
}

/// Fractions in [0, 1].
struct TextPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L with beta = 1.
inline TextPRF rouge_l(const Tokens& candidate, const Tokens& reference) {
  TextPRF out;
  if (candidate.empty() || reference.empty()) return out;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  out.precision = lcs / static_cast<double>(candidate.size());
  out.recall = lcs / static_cast<double>(reference.size());
  out.f = out.precision + out.recall == 0.0
              ? 0.0
              : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

/// Best ROUGE-L F over several references.
inline TextPRF rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
  TextPRF best;
  for (const auto& ref : references) {
    auto s = rouge_l(candidate, ref);
    if (s.f > best.f) best = s;
  }
  return best;
}

struct CiderResult {
  std::vector<double> per_item;
  double mean = 0.0;
  /// Fewer than two corpus items: every idf is zero.
  bool degenerate_idf = false;
};

/// CIDEr-D: tf-idf n-gram vectors (n = 1..4) with document frequencies
/// taken over the reference sets, clipped cosine similarity, a Gaussian
/// length penalty (sigma = 6), averaged over n and references, times 10.
/// Matches the coco-caption scorer, including its bigram-count length.
inline CiderResult cider(const std::vector<Tokens>& candidates,
                         const std::vector<std::vector<Tokens>>& references,
                         int max_n = 4, double sigma = 6.0) {
  if (candidates.size() != references.size())
    throw ArgumentError("cider: candidate/reference count mismatch");
  CiderResult out;
  if (candidates.empty()) return out;
  out.degenerate_idf = candidates.size() < 2;

  using Counts = std::vector<NgramCounts>;  // per order
  auto cook = [&](const Tokens& t) {
    Counts c;
    for (int n = 1; n <= max_n; ++n) c.push_back(ngram_counts(t, n));
    return c;
  };

  std::map<Tokens, double> doc_freq;
  std::vector<std::vector<Counts>> ref_counts(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    std::set<Tokens> seen;
    for (const auto& ref : references[i]) {
      ref_counts[i].push_back(cook(ref));
      for (const auto& per_n : ref_counts[i].back())
        for (const auto& [g, c] : per_n) seen.insert(g);
    }
    for (const auto& g : seen) doc_freq[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(candidates.size()));

  struct Vec {
    std::vector<std::map<Tokens, double>> w;
    std::vector<double> norm;
    double length = 0;
  };
  auto to_vec = [&](const Counts& counts) {
    Vec v;
    v.w.resize(max_n);
    v.norm.assign(max_n, 0.0);
    for (int n = 0; n < max_n; ++n) {
      for (const auto& [g, tf] : counts[n]) {
        auto it = doc_freq.find(g);
        const double df = std::log(std::max(1.0, it == doc_freq.end() ? 0.0 : it->second));
        const double x = tf * (log_n - df);
        v.w[n][g] = x;
        v.norm[n] += x * x;
        // The reference implementation measures length in bigrams.
        if (n == 1) v.length += tf;
      }
      v.norm[n] = std::sqrt(v.norm[n]);
    }
    return v;
  };
  auto sim = [&](const Vec& hyp, const Vec& ref) {
    const double delta = hyp.length - ref.length;
    std::vector<double> val(max_n, 0.0);
    for (int n = 0; n < max_n; ++n) {
      for (const auto& [g, x] : hyp.w[n]) {
        auto it = ref.w[n].find(g);
        if (it != ref.w[n].end()) val[n] += std::min(x, it->second) * it->second;
      }
      if (hyp.norm[n] != 0 && ref.norm[n] != 0) val[n] /= hyp.norm[n] * ref.norm[n];
      val[n] *= std::exp(-(delta * delta) / (2 * sigma * sigma));
    }
    return val;
  };

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto hyp = to_vec(cook(candidates[i]));
    std::vector<double> score(max_n, 0.0);
    for (const auto& rc : ref_counts[i]) {
      const auto s = sim(hyp, to_vec(rc));
      for (int n = 0; n < max_n; ++n) score[n] += s[n];
    }
    double avg = 0.0;
    for (double s : score) avg += s;
    avg /= max_n;
    if (!ref_counts[i].empty()) avg /= static_cast<double>(ref_counts[i].size());
    out.per_item.push_back(avg * 10.0);
  }
  for (double s : out.per_item) out.mean += s;
  out.mean /= static_cast<double>(out.per_item.size());
  return out;
}

}  // namespace ambiq::eval
