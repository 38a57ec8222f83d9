#pragma once

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <fcntl.h>
#include <pthread.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "ambiq/error.hpp"

namespace ambiq::decode {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Next-token model. Ids are 0..vocab_size()-1; score() returns one
/// log-probability per id. Implementations must be safe for concurrent
/// const calls.
class TokenScorer {
 public:
  virtual ~TokenScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId end_token() const = 0;
  virtual std::vector<double> score(const TokenSeq& prefix) const = 0;
};

/// Throws ValidationError("scorer-distribution") unless `logprobs` is a
/// finite distribution over `vocab` tokens summing to 1 within 1e-6.
inline void check_distribution(const std::vector<double>& logprobs, std::size_t vocab) {
  if (logprobs.size() != vocab)
    throw ValidationError("scorer-distribution", "scorer returned " +
                                                     std::to_string(logprobs.size()) +
                                                     " values for vocabulary of " +
                                                     std::to_string(vocab));
  double total = 0.0;
  for (double lp : logprobs) {
    if (!std::isfinite(lp))
      throw ValidationError("scorer-distribution", "non-finite log-probability");
    total += std::exp(lp);
  }
  if (std::fabs(total - 1.0) > 1e-6)
    throw ValidationError("scorer-distribution",
                          "probabilities sum to " + std::to_string(total));
}

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  double mx = -HUGE_VAL;
  for (double x : logits) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out;
  out.reserve(logits.size());
  for (double x : logits) out.push_back(x - lz);
  return out;
}

/// Token strings <-> ids. Ids follow insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, const std::string& end) {
    for (auto& t : tokens) add(std::move(t));
    end_ = id(end);
  }

  TokenId add(std::string token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (inserted) tokens_.push_back(std::move(token));
    return it->second;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId end_token() const noexcept { return end_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  TokenId id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw LookupError("token '" + token + "' not in vocabulary");
    return it->second;
  }

  /// nullopt when any word is out of vocabulary.
  std::optional<TokenSeq> encode(const std::vector<std::string>& words) const {
    TokenSeq out;
    for (const auto& w : words) {
      auto id = find(w);
      if (!id) return std::nullopt;
      out.push_back(*id);
    }
    return out;
  }

  std::string decode(const TokenSeq& seq, bool keep_end = false) const {
    std::string out;
    for (auto t : seq) {
      if (t == end_ && !keep_end) continue;
      if (!out.empty()) out += ' ';
      out += token(t);
    }
    return out;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId end_ = 0;
};

/// One token per line; `end` must be among them.
inline Vocabulary load_vocabulary(const std::string& path, const std::string& end = "</s>") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  if (std::find(tokens.begin(), tokens.end(), end) == tokens.end())
    throw ParseError(path, 0, "vocabulary lacks end token '" + end + "'");
  return Vocabulary(std::move(tokens), end);
}

/// In-process scorer backed by a callable.
class FunctionScorer : public TokenScorer {
 public:
  using Fn = std::function<std::vector<double>(const TokenSeq&)>;
  FunctionScorer(std::size_t vocab, TokenId end, Fn fn)
      : vocab_(vocab), end_(end), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_; }
  TokenId end_token() const override { return end_; }
  std::vector<double> score(const TokenSeq& prefix) const override { return fn_(prefix); }

 private:
  std::size_t vocab_;
  TokenId end_;
  Fn fn_;
};

/// Explicit prefix -> distribution table; unlisted prefixes are uniform.
class TableScorer : public TokenScorer {
 public:
  TableScorer(std::size_t vocab, TokenId end) : vocab_(vocab), end_(end) {}

  void set(TokenSeq prefix, std::vector<double> logprobs) {
    check_distribution(logprobs, vocab_);
    table_[std::move(prefix)] = std::move(logprobs);
  }

  std::size_t vocab_size() const override { return vocab_; }
  TokenId end_token() const override { return end_; }
  std::vector<double> score(const TokenSeq& prefix) const override {
    auto it = table_.find(prefix);
    if (it != table_.end()) return it->second;
    return std::vector<double>(vocab_, -std::log(static_cast<double>(vocab_)));
  }

 private:
  std::size_t vocab_;
  TokenId end_;
  std::map<TokenSeq, std::vector<double>> table_;
};

/// Fixed-order n-gram model with add-one smoothing, read from a counts file:
///   order N
///   <count>\t<w1> ... <wN>
/// Histories shorter than N-1 are padded with <s>; </s> is the end token.
/// P(w | h) = (c(h w) + 1) / (c(h .) + V), V counting every word but <s>.
class NgramScorer : public TokenScorer {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";

  NgramScorer(std::size_t order, const std::vector<std::pair<std::vector<std::string>, double>>& counts)
      : order_(order) {
    if (order_ < 1) throw ArgumentError("ngram order must be >= 1");
    std::vector<std::string> words;
    for (const auto& [gram, c] : counts)
      for (const auto& w : gram)
        if (w != kBos) words.push_back(w);
    words.emplace_back(kEos);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    vocab_ = Vocabulary(words, kEos);

    for (const auto& [gram, c] : counts) {
      if (gram.size() != order_)
        throw ArgumentError("ngram of length " + std::to_string(gram.size()) +
                            " in order-" + std::to_string(order_) + " model");
      if (gram.back() == kBos) throw ArgumentError("<s> cannot be predicted");
      std::vector<std::string> hist(gram.begin(), gram.end() - 1);
      auto& h = history_[hist];
      h.total += c;
      h.next[vocab_.id(gram.back())] += c;
    }
  }

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t vocab_size() const override { return vocab_.size(); }
  TokenId end_token() const override { return vocab_.end_token(); }

  std::vector<double> score(const TokenSeq& prefix) const override {
    std::vector<std::string> hist;
    const std::size_t need = order_ - 1;
    for (std::size_t i = 0; i < need; ++i) {
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(prefix.size()) -
                                 static_cast<std::ptrdiff_t>(need) + static_cast<std::ptrdiff_t>(i);
      hist.push_back(pos < 0 ? std::string(kBos) : vocab_.token(prefix[pos]));
    }
    const double v = static_cast<double>(vocab_.size());
    std::vector<double> out(vocab_.size());
    auto it = history_.find(hist);
    const double total = it == history_.end() ? 0.0 : it->second.total;
    for (std::size_t w = 0; w < out.size(); ++w) {
      double c = 0.0;
      if (it != history_.end()) {
        auto jt = it->second.next.find(static_cast<TokenId>(w));
        if (jt != it->second.next.end()) c = jt->second;
      }
      out[w] = std::log((c + 1.0) / (total + v));
    }
    return out;
  }

 private:
  struct History {
    double total = 0.0;
    std::map<TokenId, double> next;
  };
  std::size_t order_;
  Vocabulary vocab_;
  std::map<std::vector<std::string>, History> history_;
};

inline NgramScorer load_ngram_scorer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0, order = 0;
  std::vector<std::pair<std::vector<std::string>, double>> counts;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!order) {
      std::istringstream head(line);
      std::string kw;
      if (!(head >> kw >> order) || kw != "order" || order == 0)
        throw ParseError(path, lineno, "expected 'order N' header");
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path, lineno, "expected count<TAB>ngram");
    double c = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + tab, c);
    if (ec != std::errc() || p != line.data() + tab || c < 0)
      throw ParseError(path, lineno, "bad count");
    std::istringstream words(line.substr(tab + 1));
    std::vector<std::string> gram;
    for (std::string w; words >> w;) gram.push_back(w);
    if (gram.size() != order)
      throw ParseError(path, lineno, "expected " + std::to_string(order) + " words");
    counts.emplace_back(std::move(gram), c);
  }
  if (!order) throw ParseError(path, lineno, "missing 'order N' header");
  try {
    return NgramScorer(order, counts);
  } catch (const ArgumentError& e) {
    throw ParseError(path, 0, e.what());
  }
}

/// Scorer living in a child process. Protocol: one JSON object per line,
/// request {"prefix": [ids]} on the child's stdin, response
/// {"logprobs": [...]} on its stdout.
class ExternalProcessScorer : public TokenScorer {
 public:
  ExternalProcessScorer(std::vector<std::string> argv, std::size_t vocab, TokenId end)
      : vocab_(vocab), end_(end) {
    if (argv.empty()) throw ArgumentError("external scorer: empty command");
    int to_child[2], from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) throw IoError("external scorer: pipe failed");
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw IoError("external scorer: pipe failed");
    }
    std::vector<char*> args;
    for (auto& a : argv) args.push_back(a.data());
    args.push_back(nullptr);
    pid_ = fork();
    if (pid_ < 0) throw IoError("external scorer: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      execvp(args[0], args.data());
      _exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    in_ = fdopen(from_child[0], "r");
  }

  ExternalProcessScorer(const ExternalProcessScorer&) = delete;
  ExternalProcessScorer& operator=(const ExternalProcessScorer&) = delete;

  ~ExternalProcessScorer() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (in_) std::fclose(in_);
    if (pid_ > 0) waitpid(pid_, nullptr, 0);
  }

  std::size_t vocab_size() const override { return vocab_; }
  TokenId end_token() const override { return end_; }

  std::vector<double> score(const TokenSeq& prefix) const override {
    std::lock_guard lock(mu_);
    const std::string request = nlohmann::json{{"prefix", prefix}}.dump() + "\n";
    if (!write_all(request)) throw IoError("external scorer: child closed its input");
    std::string line;
    for (int ch; (ch = std::fgetc(in_)) != EOF && ch != '\n';) line.push_back(static_cast<char>(ch));
    if (line.empty()) throw IoError("external scorer: no response from child");
    std::vector<double> out;
    try {
      out = nlohmann::json::parse(line).at("logprobs").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("external scorer", 0, std::string("bad response: ") + e.what());
    }
    check_distribution(out, vocab_);
    return out;
  }

 private:
  // SIGPIPE is blocked while writing so a dead child surfaces as EPIPE.
  bool write_all(const std::string& data) const {
    sigset_t block, old;
    sigemptyset(&block);
    sigaddset(&block, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &block, &old);
    bool ok = true;
    for (std::size_t off = 0; off < data.size();) {
      const auto n = ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        ok = false;
        break;
      }
      off += static_cast<std::size_t>(n);
    }
    if (!ok) {
      const timespec zero{0, 0};
      sigtimedwait(&block, nullptr, &zero);
    }
    pthread_sigmask(SIG_SETMASK, &old, nullptr);
    return ok;
  }

  std::size_t vocab_;
  TokenId end_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  FILE* in_ = nullptr;
  mutable std::mutex mu_;
};

}  // namespace ambiq::decode
