#pragma once

// ambiq command-line driver. Kept in a header so tests can run commands
// in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "ambiq/agreement/annotations.hpp"
#include "ambiq/clustering/prioritize.hpp"
#include "ambiq/corpus/jsonl.hpp"
#include "ambiq/corpus/splits.hpp"
#include "ambiq/corpus/vqa_io.hpp"
#include "ambiq/decode/beam.hpp"
#include "ambiq/decode/constraints.hpp"
#include "ambiq/decode/scorer.hpp"
#include "ambiq/embeddings.hpp"
#include "ambiq/error.hpp"
#include "ambiq/eval/clustering_eval.hpp"
#include "ambiq/eval/representations.hpp"
#include "ambiq/eval/statistics.hpp"
#include "ambiq/eval/text_metrics.hpp"
#include "ambiq/service/annotation_service.hpp"
#include "ambiq/service/http_api.hpp"

namespace ambiq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitUsage = 64;

using Json = nlohmann::ordered_json;

/// Bad combination of flags, reported like a parse error.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct Outcome {
  Json result;
  std::optional<Table> table;
  std::string summary;
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool csv = false;
  std::string output;
  std::string data_dir;
};

namespace detail {

inline std::string num(double x, int precision = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << x;
  return ss.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv(std::ostream& out, const Json& config, const Table& t) {
  out << "# config: " << config.dump() << "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_field(cells[i]);
    out << "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

inline std::vector<corpus::AnswerGrouping> read_groupings(const std::string& path) {
  return corpus::import_jsonl(path);
}

/// JSONL objects, one per non-blank line.
inline std::vector<nlohmann::json> read_json_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  return out;
}

template <class Fn>
auto per_line(const std::string& path, const std::vector<nlohmann::json>& lines, Fn fn) {
  using T = decltype(fn(lines.front()));
  std::vector<T> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(fn(lines[i]));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, i + 1, e.what());
    }
  }
  return out;
}

inline agreement::Aggregation aggregation_from(const std::string& s) {
  if (s == "macro") return agreement::Aggregation::macro;
  if (s == "micro") return agreement::Aggregation::micro;
  throw UsageError("unknown aggregation '" + s + "'");
}

}  // namespace detail

/// Builds the CLI11 app. Each subcommand registers a runner that fills an
/// Outcome and a resolved-config object.
class App {
 public:
  App() : app_("Ambiguous visual question toolkit", "ambiq") {
    app_.require_subcommand(1);
    app_.set_help_all_flag("--help-all", "Expand all help");
    add_prioritize();
    add_agreement();
    add_eval_clusters();
    add_metrics();
    add_stats();
    add_decode();
    add_serve();
    add_export();
  }

  int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
      app_.parse(rev);
    } catch (const CLI::CallForHelp&) {
      out << help_text();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app_.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "ambiq: " << e.what() << "\n" << "run 'ambiq --help' for usage\n";
      return kExitUsage;
    }
    if (const char* env = std::getenv("AMBIQ_DATA_DIR"); env && common_.data_dir.empty())
      common_.data_dir = env;

    for (auto* sub : app_.get_subcommands()) {
      const auto name = sub->get_name();
      Json config;
      config["command"] = name;
      config["seed"] = common_.seed;
      config["jobs"] = common_.jobs;
      config["data_dir"] = common_.data_dir;
      try {
        Outcome o = runners_.at(name)(config);
        emit(out, config, o);
        if (!o.summary.empty()) err << name << ": " << o.summary << "\n";
        return kExitOk;
      } catch (const UsageError& e) {
        err << "ambiq " << name << ": " << e.what() << "\n";
        return kExitUsage;
      } catch (const ArgumentError& e) {
        err << "ambiq " << name << ": " << e.what() << "\n";
        return kExitUsage;
      } catch (const IoError& e) {
        err << "ambiq " << name << ": " << e.what() << "\n";
        return kExitIo;
      } catch (const ValidationError& e) {
        err << "ambiq " << name << ": " << e.what() << "\n";
        return kExitValidation;
      } catch (const std::exception& e) {
        err << "ambiq " << name << ": " << e.what() << "\n";
        return kExitValidation;
      }
    }
    return kExitUsage;
  }

 private:
  using Runner = std::function<Outcome(Json&)>;

  std::string help_text() const {
    for (auto* sub : app_.get_subcommands()) return sub->help();
    return app_.help();
  }

  void emit(std::ostream& out, const Json& config, const Outcome& o) const {
    std::ofstream file;
    std::ostream* dst = &out;
    if (!common_.output.empty()) {
      file.open(common_.output, std::ios::binary | std::ios::trunc);
      if (!file) throw IoError("cannot write " + common_.output);
      dst = &file;
    }
    if (common_.csv && o.table) {
      detail::write_csv(*dst, config, *o.table);
    } else {
      Json doc;
      doc["config"] = config;
      doc["result"] = o.result;
      *dst << doc.dump(2) << "\n";
    }
    if (!*dst) throw IoError("write failed");
  }

  /// Relative input paths resolve against the data directory.
  std::string input(const std::string& p) const {
    if (p.empty() || common_.data_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (std::filesystem::path(common_.data_dir) / p).string();
  }

  CLI::App* subcommand(const std::string& name, const std::string& desc) {
    auto* sub = app_.add_subcommand(name, desc);
    sub->add_option("--seed", common_.seed, "Seed for all randomness")->capture_default_str();
    sub->add_option("--jobs", common_.jobs, "Worker threads")->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_flag("--csv", common_.csv, "Write the result table as CSV");
    sub->add_option("-o,--output", common_.output, "Write the result here instead of stdout");
    sub->add_option("--data-dir", common_.data_dir,
                    "Base for relative input paths (default: $AMBIQ_DATA_DIR)");
    return sub;
  }

  // -- prioritize ---------------------------------------------------------

  struct PrioritizeArgs {
    std::string questions, annotations, embeddings, reasons, flag = corpus::kAmbiguityFlag;
    std::optional<double> penalty;
    std::size_t k_max = 5, restarts = 10;
    std::string sort_policy = "score_then_balance";
  } pr_;

  void add_prioritize() {
    auto* s = subcommand("prioritize", "Rank examples for annotation by clustering their answers");
    s->add_option("--questions", pr_.questions, "VQA questions JSON")->required();
    s->add_option("--annotations", pr_.annotations, "VQA annotations JSON")->required();
    s->add_option("--embeddings", pr_.embeddings, "Word vectors, GloVe text format")->required();
    s->add_option("--reasons", pr_.reasons, "Disagreement labels JSON; keeps flagged examples");
    s->add_option("--flag", pr_.flag, "Reason code marking an example ambiguous")->capture_default_str();
    s->add_option("--penalty", pr_.penalty, "Per-cluster penalty (default: data-dependent)");
    s->add_option("--k-max", pr_.k_max, "Largest k tried")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--restarts", pr_.restarts, "k-means restarts")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--sort-policy", pr_.sort_policy)->capture_default_str()
        ->check(CLI::IsMember({"score_then_balance", "balance_then_score"}));
    runners_["prioritize"] = [this](Json& config) {
      config["questions"] = pr_.questions;
      config["annotations"] = pr_.annotations;
      config["embeddings"] = pr_.embeddings;
      config["reasons"] = pr_.reasons;
      config["flag"] = pr_.flag;
      config["penalty"] = pr_.penalty ? Json(*pr_.penalty) : Json("default");
      config["k_max"] = pr_.k_max;
      config["restarts"] = pr_.restarts;
      config["sort_policy"] = pr_.sort_policy;

      auto examples = corpus::load_vqa(input(pr_.questions), input(pr_.annotations));
      Json result;
      if (!pr_.reasons.empty()) {
        auto sub = corpus::filter_ambiguous_subset(
            examples, corpus::load_reason_labels(input(pr_.reasons)), pr_.flag);
        result["subset"] = {{"kept", sub.examples.size()},
                            {"unlabeled", sub.unlabeled},
                            {"not_flagged", sub.not_flagged}};
        examples = std::move(sub.examples);
      }
      const auto table = embeddings::load_embedding_table(input(pr_.embeddings));
      clustering::PrioritizeConfig pc;
      pc.penalty = pr_.penalty;
      pc.k_max = pr_.k_max;
      pc.restarts = pr_.restarts;
      pc.seed = common_.seed;
      pc.sort_policy = clustering::sort_policy_from_string(pr_.sort_policy);
      pc.jobs = common_.jobs;
      const auto q = clustering::prioritize(examples, table, pc);

      Outcome o;
      auto items = Json::array();
      Table t{{"rank", "question_id", "score", "balance", "k", "penalty", "oov_answers"}, {}};
      for (std::size_t i = 0; i < q.items.size(); ++i) {
        const auto& it = q.items[i];
        auto j = clustering::to_json(it);
        j["rank"] = i + 1;
        items.push_back(std::move(j));
        t.rows.push_back({std::to_string(i + 1), it.question_id, detail::num(it.score()),
                          detail::num(it.balance()), std::to_string(it.cluster_result.k),
                          detail::num(it.penalty), std::to_string(it.oov_answers)});
      }
      result["items"] = std::move(items);
      result["dropped_yes_no"] = q.dropped_yes_no;
      result["quarantined"] = q.quarantined;
      result["normalized_before_yes_no"] = q.normalized_before_yes_no;
      o.result = std::move(result);
      o.table = std::move(t);
      o.summary = std::to_string(q.items.size()) + " queued, " +
                  std::to_string(q.dropped_yes_no.size()) + " yes/no dropped, " +
                  std::to_string(q.quarantined.size()) + " quarantined";
      return o;
    };
  }

  // -- agreement ----------------------------------------------------------

  struct AgreementArgs {
    std::vector<std::string> annotations;
    std::string aggregation = "macro";
  } ag_;

  void add_agreement() {
    auto* s = subcommand("agreement", "Pairwise ambiguity and cluster agreement between annotators");
    s->add_option("--annotations", ag_.annotations, "Annotation JSONL (repeatable)")->required();
    s->add_option("--aggregation", ag_.aggregation)->capture_default_str()
        ->check(CLI::IsMember({"macro", "micro"}));
    runners_["agreement"] = [this](Json& config) {
      config["annotations"] = ag_.annotations;
      config["aggregation"] = ag_.aggregation;
      std::vector<corpus::AnswerGrouping> rows;
      for (const auto& p : ag_.annotations) {
        auto part = detail::read_groupings(input(p));
        rows.insert(rows.end(), part.begin(), part.end());
      }
      const auto r = agreement::pool_agreement(agreement::pool_by_annotator(rows),
                                               detail::aggregation_from(ag_.aggregation));
      Outcome o;
      o.result = agreement::to_json(r);
      Table t{{"a", "b", "shared", "clustered", "ambiguity_agreement", "cluster_f1"}, {}};
      auto value = [](const std::optional<agreement::Summary>& s, std::size_t a, std::size_t b) {
        if (s)
          for (const auto& p : s->pairs)
            if (p.first == a && p.second == b) return detail::num(p.value, 1);
        return std::string();
      };
      for (const auto& p : r.pairs)
        t.rows.push_back({r.annotators[p.first], r.annotators[p.second], std::to_string(p.shared),
                          std::to_string(p.clustered), value(r.ambiguity, p.first, p.second),
                          value(r.cluster, p.first, p.second)});
      o.table = std::move(t);
      if (r.empty_overlap()) {
        o.summary = "no annotator pair shares an example";
      } else {
        o.summary = "ambiguity agreement " + detail::num(r.ambiguity->mean, 1);
        if (r.cluster) o.summary += ", cluster F1 " + detail::num(r.cluster->mean, 1);
      }
      return o;
    };
  }

  // -- eval-clusters ------------------------------------------------------

  struct EvalArgs {
    std::string gold, embeddings, representations, rep_name = "Representations";
    std::vector<std::string> methods;
    std::optional<double> penalty;
    std::size_t k_max = 5, seeds = 20;
    bool weight_by_answers = false;
    std::string aggregation = "macro";
  } ev_;

  void add_eval_clusters() {
    auto* s = subcommand("eval-clusters", "Score clustering methods against gold answer groups");
    s->add_option("--gold", ev_.gold, "Gold annotation JSONL")->required();
    s->add_option("--method", ev_.methods,
                  "random, perfect-precision, perfect-recall, glove-initial, representations "
                  "(repeatable; default: all that have inputs)")
        ->check(CLI::IsMember({"random", "perfect-precision", "perfect-recall", "glove-initial",
                               "representations"}));
    s->add_option("--embeddings", ev_.embeddings, "Word vectors for glove-initial");
    s->add_option("--penalty", ev_.penalty, "glove-initial penalty (default: data-dependent)");
    s->add_option("--k-max", ev_.k_max, "glove-initial largest k")->capture_default_str()
        ->check(CLI::PositiveNumber);
    s->add_option("--representations", ev_.representations, "Representation manifest");
    s->add_option("--name", ev_.rep_name, "Row name for --representations")->capture_default_str();
    s->add_option("--seeds", ev_.seeds, "Runs for stochastic methods")->capture_default_str()
        ->check(CLI::PositiveNumber);
    s->add_flag("--weight-by-answers", ev_.weight_by_answers, "Weight examples by answer count");
    s->add_option("--aggregation", ev_.aggregation)->capture_default_str()
        ->check(CLI::IsMember({"macro", "micro"}));
    runners_["eval-clusters"] = [this](Json& config) {
      auto methods = ev_.methods;
      if (methods.empty()) {
        methods = {"random", "perfect-precision", "perfect-recall"};
        if (!ev_.embeddings.empty()) methods.push_back("glove-initial");
        if (!ev_.representations.empty()) methods.push_back("representations");
      }
      config["gold"] = ev_.gold;
      config["methods"] = methods;
      config["embeddings"] = ev_.embeddings;
      config["penalty"] = ev_.penalty ? Json(*ev_.penalty) : Json("default");
      config["k_max"] = ev_.k_max;
      config["representations"] = ev_.representations;
      config["seeds"] = ev_.seeds;
      config["weight_by_answers"] = ev_.weight_by_answers;
      config["aggregation"] = ev_.aggregation;

      const auto gold = detail::read_groupings(input(ev_.gold));
      std::optional<embeddings::EmbeddingTable> table;
      std::optional<eval::RepresentationFile> reps;
      std::vector<eval::Method> ms;
      for (const auto& m : methods) {
        if (m == "random") {
          ms.push_back(eval::random_method());
        } else if (m == "perfect-precision") {
          ms.push_back(eval::perfect_precision_method());
        } else if (m == "perfect-recall") {
          ms.push_back(eval::perfect_recall_method());
        } else if (m == "glove-initial") {
          if (ev_.embeddings.empty()) throw UsageError("glove-initial needs --embeddings");
          if (!table) table = embeddings::load_embedding_table(input(ev_.embeddings));
          clustering::PrioritizeConfig pc;
          pc.penalty = ev_.penalty;
          pc.k_max = ev_.k_max;
          pc.seed = common_.seed;
          ms.push_back(eval::glove_initial_method(*table, pc));
        } else {
          if (ev_.representations.empty()) throw UsageError("representations needs --representations");
          if (!reps) reps = eval::load_representations(input(ev_.representations));
          ms.push_back(eval::representations_method(ev_.rep_name, *reps));
        }
      }
      eval::EvalOptions eo;
      eo.seeds = ev_.seeds;
      eo.seed = common_.seed;
      eo.weight_by_answers = ev_.weight_by_answers;
      eo.aggregation = detail::aggregation_from(ev_.aggregation);
      eo.jobs = common_.jobs;
      const auto report = eval::evaluate_clustering(gold, ms, eo);

      Outcome o;
      o.result = eval::to_json(report);
      Table t{{"method", "avg_p", "avg_r", "avg_f1", "examples", "runs"}, {}};
      for (const auto& r : report.rows) {
        t.rows.push_back({r.method, detail::num(r.avg.precision, 1), detail::num(r.avg.recall, 1),
                          detail::num(r.avg.f1, 1), std::to_string(r.examples),
                          std::to_string(r.runs)});
        if (!o.summary.empty()) o.summary += "; ";
        o.summary += r.method + " F1 " + detail::num(r.avg.f1, 1);
      }
      o.table = std::move(t);
      return o;
    };
  }

  // -- metrics ------------------------------------------------------------

  struct MetricsArgs {
    std::string input;
    std::vector<std::string> metrics;
    std::size_t max_n = 4;
    bool smoothing = false;
  } me_;

  void add_metrics() {
    auto* s = subcommand("metrics", "BLEU, ROUGE-L and CIDEr-D for generated questions");
    s->add_option("--input", me_.input,
                  "JSONL of {\"id\", \"candidate\", \"references\": [...]}")->required();
    s->add_option("--metric", me_.metrics, "bleu, rouge-l, cider (repeatable; default: all)")
        ->check(CLI::IsMember({"bleu", "rouge-l", "cider"}));
    s->add_option("--max-n", me_.max_n, "BLEU order")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_flag("--smoothing", me_.smoothing, "Add-one smoothing for BLEU orders above 1");
    runners_["metrics"] = [this](Json& config) {
      auto metrics = me_.metrics.empty() ? std::vector<std::string>{"bleu", "rouge-l", "cider"}
                                         : me_.metrics;
      config["input"] = me_.input;
      config["metrics"] = metrics;
      config["max_n"] = me_.max_n;
      config["smoothing"] = me_.smoothing;
      const auto path = input(me_.input);
      struct Item {
        std::string id;
        eval::Tokens cand;
        std::vector<eval::Tokens> refs;
      };
      const auto items = detail::per_line(path, detail::read_json_lines(path), [](const auto& j) {
        Item it{corpus::detail::id_string(j.at("id")), eval::tokenize(j.at("candidate").template get<std::string>()), {}};
        for (const auto& r : j.at("references")) it.refs.push_back(eval::tokenize(r.template get<std::string>()));
        return it;
      });
      if (items.empty()) throw ValidationError("metrics-input", "no items in " + path);
      auto want = [&](const char* m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };

      eval::BleuOptions bo{static_cast<int>(me_.max_n), me_.smoothing};
      std::vector<eval::Tokens> cands;
      std::vector<std::vector<eval::Tokens>> refs;
      for (const auto& it : items) {
        cands.push_back(it.cand);
        refs.push_back(it.refs);
      }
      std::optional<eval::CiderResult> cider;
      if (want("cider")) cider = eval::cider(cands, refs);

      Outcome o;
      Json rows = Json::array();
      Table t{{"id"}, {}};
      for (const auto& m : metrics) t.header.push_back(m);
      double rouge_sum = 0.0;
      for (std::size_t i = 0; i < items.size(); ++i) {
        Json row;
        row["id"] = items[i].id;
        std::vector<std::string> cells{items[i].id};
        for (const auto& m : metrics) {
          double v = 0.0;
          if (m == "bleu") {
            v = eval::bleu(items[i].cand, items[i].refs, bo).score;
          } else if (m == "rouge-l") {
            v = eval::rouge_l(items[i].cand, items[i].refs).f;
            rouge_sum += v;
          } else {
            v = cider->per_item[i];
          }
          row[m] = v;
          cells.push_back(detail::num(v));
        }
        rows.push_back(std::move(row));
        t.rows.push_back(std::move(cells));
      }
      Json corpus_scores;
      std::vector<std::string> cells{"corpus"};
      for (const auto& m : metrics) {
        double v = 0.0;
        if (m == "bleu") v = eval::corpus_bleu(cands, refs, bo).score;
        else if (m == "rouge-l") v = rouge_sum / static_cast<double>(items.size());
        else v = cider->mean;
        corpus_scores[m] = v;
        cells.push_back(detail::num(v));
        if (!o.summary.empty()) o.summary += ", ";
        o.summary += m + " " + detail::num(v, 4);
      }
      t.rows.push_back(std::move(cells));
      o.result["corpus"] = std::move(corpus_scores);
      if (cider) o.result["cider_degenerate_idf"] = cider->degenerate_idf;
      o.result["items"] = std::move(rows);
      o.table = std::move(t);
      return o;
    };
  }

  // -- stats --------------------------------------------------------------

  struct StatsArgs {
    std::string kind, input;
    std::size_t resamples = 10000;
    double level = 0.95;
    bool by_category = false;
  } st_;

  static Json interval_json(const eval::Interval& i) { return {{"lo", i.lo}, {"hi", i.hi}}; }

  static Json mcnemar_json(const eval::McNemarResult& r) {
    return {{"b", r.b},
            {"c", r.c},
            {"statistic", r.statistic},
            {"p_value", r.p_value},
            {"method", eval::to_string(r.method)},
            {"degenerate", r.degenerate}};
  }

  void add_stats() {
    auto* s = subcommand("stats", "Significance tests, intervals and label statistics");
    s->add_option("--kind", st_.kind, "categories, mcnemar, acceptability or why")->required()
        ->check(CLI::IsMember({"categories", "mcnemar", "acceptability", "why"}));
    s->add_option("--input", st_.input, "Input JSONL")->required();
    s->add_option("--resamples", st_.resamples, "Bootstrap resamples")->capture_default_str()
        ->check(CLI::PositiveNumber);
    s->add_option("--level", st_.level, "Interval coverage")->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    s->add_flag("--by-category", st_.by_category, "acceptability: also split by category");
    runners_["stats"] = [this](Json& config) {
      config["kind"] = st_.kind;
      config["input"] = st_.input;
      config["resamples"] = st_.resamples;
      config["level"] = st_.level;
      config["by_category"] = st_.by_category;
      const auto path = input(st_.input);
      if (st_.kind == "categories") return stats_categories(path);
      if (st_.kind == "mcnemar") return stats_mcnemar(path);
      if (st_.kind == "acceptability") return stats_acceptability(path);
      return stats_why(path);
    };
  }

  Outcome stats_categories(const std::string& path) const {
    const auto rows = detail::read_groupings(path);
    const auto s = eval::category_stats(rows);
    Outcome o;
    o.result = eval::to_json(s);
    o.result["records"] = rows.size();
    Table t{{"label", "count"}, {}};
    for (auto l : s.ranked())
      t.rows.push_back({std::string(corpus::to_string(l)), std::to_string(s.frequency.at(l))});
    o.table = std::move(t);
    const auto top = s.ranked();
    o.summary = std::to_string(rows.size()) + " records";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, top.size()); ++i)
      o.summary += (i ? ", " : "; top: ") + std::string(corpus::to_string(top[i]));
    return o;
  }

  Outcome stats_mcnemar(const std::string& path) const {
    const auto lines = detail::read_json_lines(path);
    const auto outcomes = detail::per_line(path, lines, [](const auto& j) {
      return std::pair<bool, bool>{j.at("a").template get<bool>(), j.at("b").template get<bool>()};
    });
    if (outcomes.empty()) throw ValidationError("stats-input", "no paired outcomes in " + path);
    const auto counts = eval::count_pairs(outcomes);
    const auto test = eval::mcnemar(outcomes);
    std::vector<bool> a, b;
    for (auto [x, y] : outcomes) {
      a.push_back(x);
      b.push_back(y);
    }
    Outcome o;
    o.result["n"] = outcomes.size();
    o.result["counts"] = {{"both", counts.both}, {"a_only", counts.a_only},
                          {"b_only", counts.b_only}, {"neither", counts.neither}};
    o.result["mcnemar"] = mcnemar_json(test);
    for (auto [name, xs] : {std::pair{"a", &a}, std::pair{"b", &b}})
      o.result[std::string("accuracy_") + name] = {
          {"mean", eval::mean_of(*xs)},
          {"ci", interval_json(eval::bootstrap_ci(*xs, st_.resamples, st_.level, common_.seed))}};
    o.table = Table{{"n", "a_only", "b_only", "statistic", "p_value", "method"},
                    {{std::to_string(outcomes.size()), std::to_string(test.b), std::to_string(test.c),
                      detail::num(test.statistic), detail::num(test.p_value, 12),
                      eval::to_string(test.method)}}};
    o.summary = "McNemar p = " + detail::num(test.p_value, 6) + " (" + eval::to_string(test.method) + ")";
    return o;
  }

  Outcome stats_acceptability(const std::string& path) const {
    const auto js = detail::per_line(path, detail::read_json_lines(path), [](const auto& j) {
      eval::AcceptabilityJudgment a;
      a.item_id = corpus::detail::id_string(j.at("item_id"));
      a.question_type = j.at("question_type").template get<std::string>();
      a.actual_answer = j.at("actual_answer").template get<bool>();
      a.rating = corpus::confidence_from_string(j.at("rating").template get<std::string>());
      if (j.contains("category") && !j.at("category").is_null())
        a.category = corpus::label_from_string(j.at("category").template get<std::string>());
      return a;
    });
    const auto rows =
        eval::acceptability_summary(js, st_.by_category, st_.resamples, st_.level, common_.seed);
    Outcome o;
    Json out = Json::array();
    Table t{{"question_type", "category", "actual_rate", "actual_lo", "actual_hi", "distractor_rate",
             "distractor_lo", "distractor_hi", "p_value", "paired_items"}, {}};
    auto cell = [](const eval::AcceptabilityCell& c) {
      return Json{{"n", c.n}, {"rate", c.rate}, {"ci", interval_json(c.ci)}};
    };
    for (const auto& r : rows) {
      const std::string cat = r.category ? std::string(corpus::to_string(*r.category)) : "";
      out.push_back({{"question_type", r.question_type},
                     {"category", r.category ? Json(cat) : Json()},
                     {"actual", cell(r.actual)},
                     {"distractor", cell(r.distractor)},
                     {"mcnemar", mcnemar_json(r.test)},
                     {"paired_items", r.paired_items}});
      t.rows.push_back({r.question_type, cat, detail::num(r.actual.rate), detail::num(r.actual.ci.lo),
                        detail::num(r.actual.ci.hi), detail::num(r.distractor.rate),
                        detail::num(r.distractor.ci.lo), detail::num(r.distractor.ci.hi),
                        detail::num(r.test.p_value, 12), std::to_string(r.paired_items)});
    }
    o.result["rows"] = std::move(out);
    o.table = std::move(t);
    o.summary = std::to_string(js.size()) + " judgments, " + std::to_string(rows.size()) + " rows";
    return o;
  }

  Outcome stats_why(const std::string& path) const {
    const auto recs = detail::per_line(path, detail::read_json_lines(path), [](const auto& j) {
      return eval::WhyRecord{j.at("ambiguous").template get<bool>(), j.at("dynamic").template get<bool>(),
                             j.at("agentive").template get<bool>()};
    });
    const auto x = eval::why_crosstab(recs);
    Outcome o;
    Json cells = Json::array();
    Table t{{"dynamic", "agentive", "ambiguous", "count"}, {}};
    for (int d = 0; d < 2; ++d)
      for (int a = 0; a < 2; ++a)
        for (int m = 0; m < 2; ++m) {
          const auto n = x.at(d, a, m);
          cells.push_back({{"dynamic", d == 1}, {"agentive", a == 1}, {"ambiguous", m == 1}, {"count", n}});
          t.rows.push_back({d ? "true" : "false", a ? "true" : "false", m ? "true" : "false",
                            std::to_string(n)});
        }
    o.result["cells"] = std::move(cells);
    o.result["total"] = x.total();
    o.table = std::move(t);
    o.summary = std::to_string(x.total()) + " records";
    return o;
  }

  // -- decode -------------------------------------------------------------

  struct DecodeArgs {
    std::string scorer, scorer_cmd, vocab, end = "</s>", pos_tags;
    std::vector<std::string> constraints;
    std::size_t beam = 5, max_len = 20, top_k = 0;
  } de_;

  void add_decode() {
    auto* s = subcommand("decode", "Constrained beam search over a token scorer");
    s->add_option("--scorer", de_.scorer, "N-gram counts file");
    s->add_option("--scorer-cmd", de_.scorer_cmd, "External scorer command (NDJSON over stdio)");
    s->add_option("--vocab", de_.vocab, "Vocabulary file for --scorer-cmd, one token per line");
    s->add_option("--end", de_.end, "End token for --vocab")->capture_default_str();
    s->add_option("--constraint,--constraints", de_.constraints,
                  "Phrase the output must contain; repeats are alternatives");
    s->add_option("--pos-tags", de_.pos_tags,
                  "Tagged sentences; decode once per sentence constrained to its noun spans");
    s->add_option("--beam", de_.beam, "Beam size")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--max-len", de_.max_len, "Maximum length including the end token")
        ->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--top-k", de_.top_k, "Candidates per hypothesis (0: beam size)")->capture_default_str();
    runners_["decode"] = [this](Json& config) {
      if (de_.scorer.empty() == de_.scorer_cmd.empty())
        throw UsageError("give exactly one of --scorer and --scorer-cmd");
      if (!de_.scorer_cmd.empty() && de_.vocab.empty()) throw UsageError("--scorer-cmd needs --vocab");
      if (!de_.pos_tags.empty() && !de_.constraints.empty())
        throw UsageError("--pos-tags and --constraint are exclusive");
      config["scorer"] = de_.scorer;
      config["scorer_cmd"] = de_.scorer_cmd;
      config["vocab"] = de_.vocab;
      config["end"] = de_.end;
      config["constraints"] = de_.constraints;
      config["pos_tags"] = de_.pos_tags;
      config["beam"] = de_.beam;
      config["max_len"] = de_.max_len;
      config["top_k"] = de_.top_k;

      std::unique_ptr<decode::TokenScorer> scorer;
      decode::Vocabulary vocab;
      if (!de_.scorer.empty()) {
        auto ng = std::make_unique<decode::NgramScorer>(decode::load_ngram_scorer(input(de_.scorer)));
        vocab = ng->vocabulary();
        scorer = std::move(ng);
      } else {
        vocab = decode::load_vocabulary(input(de_.vocab), de_.end);
        std::vector<std::string> argv;
        std::istringstream ss(de_.scorer_cmd);
        for (std::string w; ss >> w;) argv.push_back(w);
        scorer = std::make_unique<decode::ExternalProcessScorer>(argv, vocab.size(), vocab.end_token());
      }
      auto tokenize = [&](const std::string& phrase) {
        return vocab.encode(corpus::split_words(phrase));
      };

      std::vector<std::vector<decode::NounSpan>> jobs;
      if (!de_.pos_tags.empty()) {
        for (const auto& sent : decode::load_pos_tags(input(de_.pos_tags)))
          jobs.push_back(decode::extract_noun_spans(sent.tokens, sent.tags));
      } else {
        std::vector<decode::NounSpan> spans;
        for (const auto& c : de_.constraints) spans.push_back({c, 0, 0});
        jobs.push_back(std::move(spans));
      }

      decode::BeamOptions bo{de_.beam, de_.max_len, de_.top_k};
      Outcome o;
      Json outputs = Json::array();
      Table t{{"index", "status", "text", "log_score", "satisfied"}, {}};
      std::size_t finished = 0, dropped = 0;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto compiled = decode::compile_constraints(jobs[i], tokenize);
        std::vector<std::string> phrases;
        for (const auto& sp : jobs[i]) phrases.push_back(sp.text);
        Json out;
        out["constraints"] = phrases;
        out["dropped"] = compiled.dropped;
        dropped += compiled.dropped.size();
        std::string status;
        decode::TokenSeq tokens;
        double score = 0.0;
        std::size_t steps = 0;
        try {
          const auto r = decode::constrained_beam_search(*scorer, compiled.sets, bo);
          status = r.finished ? "finished" : "incomplete";
          tokens = r.tokens;
          score = r.log_score;
          steps = r.steps;
        } catch (const decode::SearchExhausted& e) {
          status = "exhausted";
          tokens = e.best_partial().tokens;
          score = e.best_partial().log_score;
        }
        finished += status == "finished";
        const bool ok = decode::satisfies(tokens, compiled.sets);
        std::vector<std::string> words;
        for (auto tk : tokens) words.push_back(vocab.token(tk));
        out["status"] = status;
        out["text"] = vocab.decode(tokens);
        out["tokens"] = words;
        out["log_score"] = score;
        out["satisfied"] = ok;
        out["steps"] = steps;
        t.rows.push_back({std::to_string(i), status, vocab.decode(tokens), detail::num(score),
                          ok ? "true" : "false"});
        outputs.push_back(std::move(out));
      }
      o.result["outputs"] = std::move(outputs);
      o.table = std::move(t);
      o.summary = std::to_string(finished) + "/" + std::to_string(jobs.size()) + " finished";
      if (dropped) o.summary += ", " + std::to_string(dropped) + " constraint phrase(s) out of vocabulary";
      if (jobs.size() == 1) o.summary += ": " + o.result["outputs"][0]["text"].get<std::string>();
      return o;
    };
  }

  // -- serve --------------------------------------------------------------

  struct ServeArgs {
    std::string questions, annotations, embeddings, queue, events, tokens, static_dir, splits;
    std::string host = "127.0.0.1";
    int port = 8080;
    double lease_ttl_minutes = 30.0;
    std::size_t fan_out = 1;
    std::vector<std::string> vetters;
    bool check = false;
  } sv_;

  std::vector<service::QueueEntry> serve_queue() const {
    const auto examples = corpus::load_vqa(input(sv_.questions), input(sv_.annotations));
    clustering::PriorityQueue pq;
    if (!sv_.queue.empty()) {
      const auto doc = corpus::detail::parse_json_file(input(sv_.queue));
      try {
        const auto& items = doc.contains("result") ? doc.at("result").at("items") : doc.at("items");
        for (const auto& it : items) {
          clustering::PriorityItem p;
          p.question_id = corpus::detail::id_string(it.at("question_id"));
          p.cluster_result.assignments = it.at("assignments").get<std::vector<std::size_t>>();
          pq.items.push_back(std::move(p));
        }
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(input(sv_.queue), 0, e.what());
      }
    } else {
      if (sv_.embeddings.empty()) throw UsageError("serve needs --queue or --embeddings");
      clustering::PrioritizeConfig pc;
      pc.seed = common_.seed;
      pc.jobs = common_.jobs;
      pq = clustering::prioritize(examples, embeddings::load_embedding_table(input(sv_.embeddings)), pc);
    }
    return service::build_queue(examples, pq);
  }

  void add_serve() {
    auto* s = subcommand("serve", "Run the annotation HTTP service");
    s->add_option("--questions", sv_.questions, "VQA questions JSON")->required();
    s->add_option("--annotations", sv_.annotations, "VQA annotations JSON")->required();
    s->add_option("--queue", sv_.queue, "prioritize output to serve from");
    s->add_option("--embeddings", sv_.embeddings, "Word vectors; prioritize on startup");
    s->add_option("--events", sv_.events, "Event log JSONL (created if missing)");
    s->add_option("--tokens", sv_.tokens, "Bearer tokens JSON {token: annotator}");
    s->add_option("--static", sv_.static_dir, "UI bundle directory served at /");
    s->add_option("--splits", sv_.splits, "Dataset splits JSON for export filtering");
    s->add_option("--host", sv_.host)->capture_default_str();
    s->add_option("--port", sv_.port)->capture_default_str()->check(CLI::Range(0, 65535));
    s->add_option("--lease-ttl-minutes", sv_.lease_ttl_minutes)->capture_default_str()
        ->check(CLI::PositiveNumber);
    s->add_option("--fan-out", sv_.fan_out, "Annotators per example")->capture_default_str()
        ->check(CLI::PositiveNumber);
    s->add_option("--vetter", sv_.vetters, "Annotator id allowed to vet (repeatable)");
    s->add_flag("--check", sv_.check, "Load everything, print the queue and log state, and exit");
    runners_["serve"] = [this](Json& config) {
      config["questions"] = sv_.questions;
      config["annotations"] = sv_.annotations;
      config["queue"] = sv_.queue;
      config["embeddings"] = sv_.embeddings;
      config["events"] = sv_.events;
      config["tokens"] = sv_.tokens;
      config["static"] = sv_.static_dir;
      config["splits"] = sv_.splits;
      config["host"] = sv_.host;
      config["port"] = sv_.port;
      config["lease_ttl_minutes"] = sv_.lease_ttl_minutes;
      config["fan_out"] = sv_.fan_out;
      config["vetters"] = sv_.vetters;
      config["check"] = sv_.check;

      service::ServiceConfig sc;
      sc.lease_ttl = std::chrono::milliseconds(static_cast<std::int64_t>(sv_.lease_ttl_minutes * 60000));
      sc.fan_out = sv_.fan_out;
      sc.vetters = {sv_.vetters.begin(), sv_.vetters.end()};
      if (!sv_.splits.empty()) sc.splits = corpus::load_splits(input(sv_.splits));
      service::HttpOptions ho;
      if (!sv_.tokens.empty()) ho.tokens = service::load_tokens(input(sv_.tokens));
      if (!sv_.static_dir.empty()) ho.static_dir = input(sv_.static_dir);

      auto queue = serve_queue();
      service::EventLog log;
      if (!sv_.events.empty()) {
        const auto path = input(sv_.events);
        if (!sv_.check)
          log = service::EventLog(path);
        else if (std::filesystem::exists(path))
          log = service::EventLog(service::load_events(path));
      }
      service::AnnotationService svc(std::move(queue), sc, std::move(log));

      Outcome o;
      const auto exported = svc.export_dataset();
      o.result["queue_size"] = svc.queue_size();
      o.result["events"] = svc.events().size();
      o.result["records"] = exported.records.size();
      o.result["summary"] = service::to_json(exported.summary);
      o.summary = std::to_string(svc.queue_size()) + " queued, " +
                  std::to_string(svc.events().size()) + " events";
      if (sv_.check) return o;

      httplib::Server server;
      service::mount_api(server, svc, ho);
      std::cerr << "serve: listening on " << sv_.host << ":" << sv_.port << "\n";
      if (!server.listen(sv_.host, sv_.port))
        throw IoError("cannot listen on " + sv_.host + ":" + std::to_string(sv_.port));
      return o;
    };
  }

  // -- export -------------------------------------------------------------

  struct ExportArgs {
    std::string events, records, out, split, splits, splits_out;
    bool vetted_only = false;
    std::optional<std::size_t> make_dev;
  } ex_;

  void add_export() {
    auto* s = subcommand("export", "Export the dataset from an event log or annotation JSONL");
    s->add_option("--events", ex_.events, "Service event log");
    s->add_option("--records", ex_.records, "Annotation JSONL (instead of --events)");
    s->add_option("--out", ex_.out, "Write the exported JSONL here");
    s->add_flag("--vetted-only", ex_.vetted_only, "Only records whose latest event is a vetting edit");
    s->add_option("--split", ex_.split, "Keep one split")->check(CLI::IsMember({"dev", "test"}));
    s->add_option("--splits", ex_.splits, "Splits JSON used by --split");
    s->add_option("--make-splits", ex_.make_dev, "Draw a split with this many dev questions (uses --seed)");
    s->add_option("--splits-out", ex_.splits_out, "Where --make-splits writes the split");
    runners_["export"] = [this](Json& config) {
      if (ex_.events.empty() == ex_.records.empty())
        throw UsageError("give exactly one of --events and --records");
      if (!ex_.records.empty() && ex_.vetted_only)
        throw UsageError("--vetted-only needs --events");
      if (!ex_.split.empty() && ex_.splits.empty()) throw UsageError("--split needs --splits");
      if (ex_.make_dev && ex_.splits_out.empty()) throw UsageError("--make-splits needs --splits-out");
      config["events"] = ex_.events;
      config["records"] = ex_.records;
      config["out"] = ex_.out;
      config["vetted_only"] = ex_.vetted_only;
      config["split"] = ex_.split;
      config["splits"] = ex_.splits;
      config["make_splits"] = ex_.make_dev ? Json(*ex_.make_dev) : Json();
      config["splits_out"] = ex_.splits_out;

      service::ServiceConfig sc;
      if (!ex_.splits.empty()) sc.splits = corpus::load_splits(input(ex_.splits));
      std::vector<service::Event> events;
      if (!ex_.events.empty()) {
        events = service::load_events(input(ex_.events));
      } else {
        std::uint64_t seq = 0;
        for (auto& g : detail::read_groupings(input(ex_.records))) {
          const auto actor = g.annotator_id;
          events.push_back({++seq, service::EventType::annotation, 0, actor, std::move(g)});
        }
      }
      service::AnnotationService svc({}, sc, service::EventLog(std::move(events)));
      service::ExportFilter f;
      f.vetted_only = ex_.vetted_only;
      if (!ex_.split.empty()) f.split = corpus::split_name_from_string(ex_.split);
      const auto out = svc.export_dataset(f);

      if (!ex_.out.empty()) {
        std::ofstream file(ex_.out, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot write " + ex_.out);
        out.write_jsonl(file);
        if (!file) throw IoError("write failed: " + ex_.out);
      }

      Outcome o;
      o.result["summary"] = service::to_json(out.summary);
      o.result["records"] = out.records.size();
      Table t{{"n_examples", "n_rewritten_questions", "mean_answers_per_question"},
              {{std::to_string(out.summary.n_examples), std::to_string(out.summary.n_rewritten_questions),
                detail::num(out.summary.mean_answers_per_question, 4)}}};
      if (ex_.make_dev) {
        std::vector<std::string> ids;
        for (const auto& g : out.records)
          if (g.ambiguous) ids.push_back(g.question_id);
        const auto sp = corpus::make_splits(ids, *ex_.make_dev, common_.seed);
        std::ofstream file(ex_.splits_out, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot write " + ex_.splits_out);
        file << corpus::to_json(sp).dump(2) << "\n";
        o.result["splits"] = {{"dev", sp.dev.question_ids.size()}, {"test", sp.test.question_ids.size()}};
        t.header.insert(t.header.end(), {"dev", "test"});
        t.rows[0].push_back(std::to_string(sp.dev.question_ids.size()));
        t.rows[0].push_back(std::to_string(sp.test.question_ids.size()));
      }
      o.table = std::move(t);
      o.summary = std::to_string(out.summary.n_examples) + " examples, " +
                  std::to_string(out.summary.n_rewritten_questions) + " rewritten questions, " +
                  detail::num(out.summary.mean_answers_per_question, 2) + " answers per question";
      return o;
    };
  }

  CLI::App app_;
  Common common_;
  std::map<std::string, Runner> runners_;
};

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  App app;
  return app.run(args, out, err);
}

}  // namespace ambiq::cli
