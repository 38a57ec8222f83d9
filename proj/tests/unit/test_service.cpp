#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "ambiq/corpus/vqa_io.hpp"
#include "ambiq/service/annotation_service.hpp"
#include "ambiq/service/http_api.hpp"

using namespace ambiq;
using namespace ambiq::service;
using corpus::AnswerGroup;
using corpus::AnswerGrouping;

namespace fs = std::filesystem;

namespace {

std::string data(const std::string& name) { return std::string(AMBIQ_TEST_DATA_DIR) + "/" + name; }

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ambiq_service_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

corpus::VqaExample example(const std::string& qid, std::vector<std::string> answers) {
  corpus::VqaExample ex;
  ex.question_id = qid;
  ex.image_id = "img-" + qid;
  ex.image_uri = "coco:" + qid;
  ex.question = "What is it " + qid + "?";
  for (auto& a : answers) ex.answers.push_back({a, corpus::Confidence::yes, ""});
  return ex;
}

/// Queue of `n` four-answer examples q1..qn, each prefilled as {0,1},{2,3}.
std::vector<QueueEntry> small_queue(std::size_t n) {
  std::vector<QueueEntry> q;
  for (std::size_t i = 1; i <= n; ++i) {
    auto ex = example("q" + std::to_string(i), {"red", "crimson", "ball", "toy"});
    q.push_back({i, ex, prefill_groups(ex, {0, 0, 1, 1})});
  }
  return q;
}

struct ManualClock {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'000'000);
  Clock clock() const {
    return [p = now] { return *p; };
  }
  void advance(std::chrono::milliseconds d) { *now += d.count(); }
};

ServiceConfig config_with(const ManualClock& c) {
  ServiceConfig cfg;
  cfg.clock = c.clock();
  cfg.vetters = {"author"};
  return cfg;
}

AnswerGrouping two_groups(const std::string& qid, const std::string& ann) {
  AnswerGrouping g;
  g.question_id = qid;
  g.annotator_id = ann;
  g.ambiguous = true;
  g.groups = {AnswerGroup{"What color is it?", {0, 1}, {corpus::OntologyLabel::Kind}, {}},
              AnswerGroup{"What object is it?", {2, 3}, {corpus::OntologyLabel::Location}, {}}};
  return g;
}

std::string invariant_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.invariant();
  }
  return "";
}

}  // namespace

TEST(Queue, FreshQueueServesRankOne) {
  ManualClock c;
  AnnotationService svc(small_queue(2), config_with(c));
  auto r = svc.next_example("ann-1");
  ASSERT_TRUE(r.entry);
  EXPECT_EQ(r.entry->rank, 1u);
  EXPECT_EQ(r.entry->example.question_id, "q1");
  EXPECT_EQ(r.remaining, 1u);
  ASSERT_TRUE(r.lease);
  EXPECT_EQ(r.lease->expires_at - r.lease->issued_at, 30 * 60 * 1000);
}

TEST(Queue, SecondCallWithoutSubmitServesRankTwo) {
  ManualClock c;
  AnnotationService svc(small_queue(2), config_with(c));
  svc.next_example("ann-1");
  auto r = svc.next_example("ann-1");
  ASSERT_TRUE(r.entry);
  EXPECT_EQ(r.entry->rank, 2u);
  auto done = svc.next_example("ann-1");
  EXPECT_FALSE(done.entry);
  EXPECT_EQ(done.remaining, 0u);
}

TEST(Queue, LeasedItemIsNotServedToAnotherAnnotator) {
  ManualClock c;
  AnnotationService svc(small_queue(2), config_with(c));
  EXPECT_EQ(svc.next_example("a").entry->rank, 1u);
  EXPECT_EQ(svc.next_example("b").entry->rank, 2u);
  EXPECT_FALSE(svc.next_example("c").entry);
}

TEST(Queue, ExpiredLeaseIsReissued) {
  ManualClock c;
  AnnotationService svc(small_queue(1), config_with(c));
  svc.next_example("a");
  EXPECT_FALSE(svc.next_example("b").entry);
  c.advance(std::chrono::minutes(30));
  auto r = svc.next_example("b");
  ASSERT_TRUE(r.entry);
  EXPECT_EQ(r.entry->example.question_id, "q1");
  EXPECT_THROW(svc.submit("a", two_groups("q1", "a")), ConflictError);
  EXPECT_EQ(svc.submit("b", two_groups("q1", "b")), 1u);
}

TEST(Queue, FanOutServesEachItemToKAnnotators) {
  ManualClock c;
  auto cfg = config_with(c);
  cfg.fan_out = 2;
  AnnotationService svc(small_queue(1), cfg);
  ASSERT_TRUE(svc.next_example("a").entry);
  ASSERT_TRUE(svc.next_example("b").entry);
  EXPECT_FALSE(svc.next_example("c").entry);
  svc.submit("a", two_groups("q1", "a"));
  EXPECT_FALSE(svc.next_example("a").entry);
  EXPECT_FALSE(svc.next_example("c").entry);
}

TEST(Queue, ConcurrentLeasesNeverOverlap) {
  ManualClock c;
  AnnotationService svc(small_queue(200), config_with(c));
  std::vector<std::vector<std::string>> got(8);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < got.size(); ++t)
      pool.emplace_back([&, t] {
        for (;;) {
          auto r = svc.next_example("ann-" + std::to_string(t));
          if (!r.entry) break;
          got[t].push_back(r.entry->example.question_id);
        }
      });
  }
  std::multiset<std::string> all;
  for (auto& g : got) all.insert(g.begin(), g.end());
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(std::set<std::string>(all.begin(), all.end()).size(), 200u);
}

TEST(Prefill, Fig1ExampleGroupsFromEmbeddingClusters) {
  auto examples = corpus::load_vqa(data("vqa_questions.json"), data("vqa_annotations.json"));
  embeddings::EmbeddingTable table(2);
  table.insert("daisy", {1.0, 0.0});
  table.insert("daisies", {1.0, 0.05});
  table.insert("aster", {0.95, 0.0});
  table.insert("asters", {0.95, 0.05});
  table.insert("wildflowers", {0.9, 0.1});
  table.insert("purple", {0.0, 1.0});
  for (auto w : {"park", "bench", "benches", "grass", "outside", "on", "the"})
    table.insert(w, {0.5, 0.5});
  examples.resize(1);
  auto pq = clustering::prioritize(examples, table, {});
  auto queue = build_queue(examples, pq);
  ASSERT_EQ(queue.size(), 1u);
  const auto& prefill = queue[0].prefill;
  ASSERT_EQ(prefill.size(), 2u);
  for (const auto& g : prefill) EXPECT_EQ(g.rewritten_question, "What kind of flowers are these?");
  EXPECT_EQ(prefill[0].member_indices, (std::set<std::size_t>{0, 1, 2, 4, 5, 6, 7, 9}));
  EXPECT_EQ(prefill[1].member_indices, (std::set<std::size_t>{3, 8}));
  EXPECT_EQ(prefill[1].answer_texts, (std::vector<std::string>{"purple", "purple"}));
}

TEST(Prefill, LargestGroupFirstTiesBySmallestIndex) {
  auto ex = example("q", {"a", "b", "c", "d", "e"});
  auto p = prefill_groups(ex, {2, 0, 0, 2, 1});
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].member_indices, (std::set<std::size_t>{0, 3}));
  EXPECT_EQ(p[1].member_indices, (std::set<std::size_t>{1, 2}));
  EXPECT_EQ(p[2].member_indices, (std::set<std::size_t>{4}));
  EXPECT_THROW(prefill_groups(ex, {0, 1}), ArgumentError);
}

TEST(Submit, ValidFig1SubmissionIsStoredVerbatim) {
  ManualClock c;
  auto ex = example("262148000", {"daisy", "daisies", "daisy", "purple", "asters", "daisy",
                                  "wildflowers", "daisies", "purple", "aster"});
  ex.question = "What kind of flowers are these?";
  AnnotationService svc({{1, ex, prefill_groups(ex, {0, 0, 0, 1, 0, 0, 0, 0, 1, 0})}},
                        config_with(c));
  svc.next_example("ann-1");
  AnswerGrouping g;
  g.question_id = "262148000";
  g.ambiguous = true;
  g.groups = {AnswerGroup{"What species of flowers are these?", {0, 1, 2, 5, 7}, {},
                          {"daisy", "daisies", "daisy", "daisy", "daisies"}},
              AnswerGroup{"What color are the flowers?", {3, 8}, {}, {"purple", "purple"}}};
  g.deleted_indices = {4};
  EXPECT_EQ(svc.submit("ann-1", g), 1u);
  auto out = svc.export_dataset();
  ASSERT_EQ(out.records.size(), 1u);
  const auto& r = out.records[0];
  EXPECT_EQ(r.annotator_id, "ann-1");
  EXPECT_EQ(r.groups, g.groups);
  EXPECT_EQ(r.deleted_indices, g.deleted_indices);
  EXPECT_EQ(r.context.original_question, "What kind of flowers are these?");
  EXPECT_EQ(r.context.num_answers, 10u);
  // Lease released, queue advanced.
  EXPECT_FALSE(svc.next_example("ann-1").entry);
  EXPECT_THROW(svc.submit("ann-1", g), ConflictError);
}

TEST(Submit, ViolationsCarryInvariantNames) {
  ManualClock c;
  AnnotationService svc(small_queue(1), config_with(c));
  svc.next_example("a");

  auto overlap = two_groups("q1", "a");
  overlap.groups[1].member_indices = {1, 2};
  EXPECT_EQ(invariant_of([&] { svc.submit("a", overlap); }), "groups-disjoint");

  auto unamb = two_groups("q1", "a");
  unamb.ambiguous = false;
  unamb.skip_reason = "reason";
  EXPECT_EQ(invariant_of([&] { svc.submit("a", unamb); }), "unambiguous-no-groups");

  auto dup = two_groups("q1", "a");
  dup.groups[1].rewritten_question = "  what COLOR is it? ";
  EXPECT_EQ(invariant_of([&] { svc.submit("a", dup); }), "rewrite-distinct");

  auto range = two_groups("q1", "a");
  range.groups[1].member_indices = {2, 7};
  EXPECT_EQ(invariant_of([&] { svc.submit("a", range); }), "index-range");

  // Rejected submissions leave the lease in place.
  EXPECT_EQ(svc.submit("a", two_groups("q1", "a")), 1u);
  EXPECT_EQ(svc.events().size(), 1u);
}

TEST(Submit, NeedsLeaseAndKnownQuestion) {
  ManualClock c;
  AnnotationService svc(small_queue(1), config_with(c));
  EXPECT_THROW(svc.submit("a", two_groups("q1", "a")), ConflictError);
  svc.next_example("a");
  EXPECT_THROW(svc.submit("a", two_groups("nope", "a")), LookupError);
  EXPECT_THROW(svc.submit("a", two_groups("q1", "b")), PermissionError);
  EXPECT_THROW(svc.submit("", two_groups("q1", "a")), ArgumentError);
}

TEST(Skip, DefaultAndCustomReasons) {
  ManualClock c;
  AnnotationService svc(small_queue(2), config_with(c));
  svc.next_example("a");
  svc.next_example("a");
  EXPECT_EQ(svc.skip("a", "q1"), 1u);
  EXPECT_EQ(svc.skip("a", "q2", "Image is too dark"), 2u);
  auto out = svc.export_dataset();
  ASSERT_EQ(out.records.size(), 2u);
  EXPECT_FALSE(out.records[0].ambiguous);
  EXPECT_EQ(out.records[0].skip_reason, std::string("All answers to the same question"));
  EXPECT_EQ(out.records[1].skip_reason, std::string("Image is too dark"));
  EXPECT_EQ(out.summary.n_examples, 0u);
}

TEST(Skip, SkippedItemIsNotServedAgain) {
  ManualClock c;
  AnnotationService svc(small_queue(2), config_with(c));
  svc.next_example("a");
  svc.skip("a", "q1");
  auto r = svc.next_example("a");
  ASSERT_TRUE(r.entry);
  EXPECT_EQ(r.entry->example.question_id, "q2");
  c.advance(std::chrono::hours(2));
  auto again = svc.next_example("a");
  ASSERT_TRUE(again.entry);
  EXPECT_EQ(again.entry->example.question_id, "q2");
  EXPECT_THROW(svc.skip("b", "q2"), ConflictError);
}

TEST(Export, EmptyStore) {
  ManualClock c;
  AnnotationService svc(small_queue(1), config_with(c));
  auto out = svc.export_dataset();
  EXPECT_TRUE(out.records.empty());
  EXPECT_EQ(out.jsonl(), "");
  EXPECT_EQ(out.summary.n_examples, 0u);
  EXPECT_EQ(out.summary.n_rewritten_questions, 0u);
  EXPECT_EQ(out.summary.mean_answers_per_question, 0.0);
}

TEST(Export, SummaryCountsDistinctAnswersPerRewrite) {
  ManualClock c;
  auto ex = example("q1", {"red", "Red", "ball", "toy"});
  AnnotationService svc({{1, ex, prefill_groups(ex, {0, 0, 1, 1})}}, config_with(c));
  svc.next_example("a");
  svc.submit("a", two_groups("q1", "a"));
  auto s = svc.export_dataset().summary;
  EXPECT_EQ(s.n_examples, 1u);
  EXPECT_EQ(s.n_rewritten_questions, 2u);
  // "red" and "Red" normalize to one answer: (1 + 2) / 2.
  EXPECT_DOUBLE_EQ(s.mean_answers_per_question, 1.5);
}

TEST(Vet, EditReplacesRecordAndFiltersExport) {
  ManualClock c;
  AnnotationService svc(small_queue(2), config_with(c));
  svc.next_example("a");
  svc.next_example("a");
  svc.submit("a", two_groups("q1", "a"));
  svc.submit("a", two_groups("q2", "a"));

  auto edit = two_groups("q1", "a");
  edit.groups[0].rewritten_question = "What colour is the ball?";
  EXPECT_THROW(svc.vet("a", edit), PermissionError);
  EXPECT_THROW(svc.vet("author", two_groups("q1", "zed")), LookupError);
  auto bad = edit;
  bad.groups.pop_back();
  EXPECT_EQ(invariant_of([&] { svc.vet("author", bad); }), "ambiguous-min-groups");
  EXPECT_EQ(svc.vet("author", edit), 3u);

  auto all = svc.export_dataset();
  ASSERT_EQ(all.records.size(), 2u);
  EXPECT_EQ(all.records[0].groups[0].rewritten_question, "What colour is the ball?");
  auto vetted = svc.export_dataset({.vetted_only = true});
  ASSERT_EQ(vetted.records.size(), 1u);
  EXPECT_EQ(vetted.records[0].question_id, "q1");
  // The original survives in the log.
  EXPECT_EQ(svc.events()[0].record.groups[0].rewritten_question, "What color is it?");
}

TEST(Export, SplitFilter) {
  ManualClock c;
  auto cfg = config_with(c);
  AnnotationService no_splits(small_queue(1), cfg);
  EXPECT_THROW(no_splits.export_dataset({.split = corpus::SplitName::dev}), ArgumentError);

  cfg.splits = corpus::make_splits({"q1", "q2", "q3"}, 1, 7);
  AnnotationService svc(small_queue(3), cfg);
  for (int i = 0; i < 3; ++i) svc.next_example("a");
  for (auto q : {"q1", "q2", "q3"}) svc.submit("a", two_groups(q, "a"));
  auto dev = svc.export_dataset({.split = corpus::SplitName::dev});
  auto test = svc.export_dataset({.split = corpus::SplitName::test});
  ASSERT_EQ(dev.records.size(), 1u);
  EXPECT_EQ(test.records.size(), 2u);
  EXPECT_TRUE(cfg.splits->dev.question_ids.count(dev.records[0].question_id));
}

TEST(Splits, SeededAndDisjoint) {
  std::vector<std::string> ids;
  for (int i = 0; i < 241; ++i) ids.push_back("q" + std::to_string(i));
  auto a = corpus::make_splits(ids, 30, 3);
  auto b = corpus::make_splits(ids, 30, 3);
  EXPECT_EQ(a.dev.question_ids, b.dev.question_ids);
  EXPECT_EQ(a.dev.question_ids.size(), 30u);
  EXPECT_EQ(a.test.question_ids.size(), 211u);
  EXPECT_NO_THROW(corpus::check_disjoint(a));
  EXPECT_THROW(corpus::make_splits(ids, 242, 0), ArgumentError);

  auto dir = temp_dir("splits");
  std::ofstream(dir / "s.json") << corpus::to_json(a).dump();
  auto back = corpus::load_splits((dir / "s.json").string());
  EXPECT_EQ(back.dev.question_ids, a.dev.question_ids);
  std::ofstream(dir / "bad.json") << R"({"dev": ["x"], "test": ["x"]})";
  EXPECT_THROW(corpus::load_splits((dir / "bad.json").string()), ValidationError);
}

TEST(EventLog, ReplayReproducesExportBytes) {
  auto dir = temp_dir("replay");
  const auto path = (dir / "events.jsonl").string();
  ManualClock c;
  std::string first;
  {
    AnnotationService svc(small_queue(3), config_with(c), EventLog(path));
    svc.next_example("a");
    svc.next_example("b");
    svc.submit("a", two_groups("q1", "a"));
    svc.skip("b", "q2");
    auto edit = two_groups("q1", "a");
    edit.groups[1].labels = {corpus::OntologyLabel::Purpose};
    svc.vet("author", edit);
    first = svc.export_dataset().jsonl();
  }
  AnnotationService again(small_queue(3), config_with(c), EventLog(path));
  EXPECT_EQ(again.export_dataset().jsonl(), first);
  const auto ev = again.events();
  ASSERT_EQ(ev.size(), 3u);
  for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_EQ(ev[i].seq, i + 1);
  // Replayed records count against fan-out: q1 and q2 are done.
  auto r = again.next_example("a");
  ASSERT_TRUE(r.entry);
  EXPECT_EQ(r.entry->example.question_id, "q3");
  EXPECT_EQ(again.submit("a", two_groups("q3", "a")), 4u);
}

TEST(EventLog, RejectsGapsAndGarbage) {
  auto dir = temp_dir("badlog");
  EventLog mem;
  mem.append({0, EventType::skip, 5, "a", {"q", "a", false, {}, "r", {}, {}}});
  auto line = to_json(mem.events()[0]);
  line["seq"] = 2;
  std::ofstream(dir / "gap.jsonl") << line.dump() << "\n";
  try {
    EventLog log((dir / "gap.jsonl").string());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.invariant(), "event-seq-dense");
    EXPECT_EQ(e.line(), 1u);
  }
  std::ofstream(dir / "junk.jsonl") << to_json(mem.events()[0]).dump() << "\n{oops\n";
  try {
    EventLog log((dir / "junk.jsonl").string());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(Agreement, DuplicateAnnotatorsAgreeFully) {
  ManualClock c;
  auto cfg = config_with(c);
  cfg.fan_out = 2;
  AnnotationService svc(small_queue(3), cfg);
  for (auto who : {"a", "b"}) {
    for (int i = 0; i < 3; ++i) svc.next_example(who);
    for (auto q : {"q1", "q2", "q3"}) svc.submit(who, two_groups(q, who));
  }
  auto r = svc.live_agreement();
  ASSERT_FALSE(r.empty_overlap());
  EXPECT_DOUBLE_EQ(r.ambiguity->mean, 100.0);
  ASSERT_TRUE(r.cluster);
  EXPECT_DOUBLE_EQ(r.cluster->mean, 100.0);
  EXPECT_EQ(r.pairs[0].shared, 3u);
}

TEST(Agreement, SingleAnnotatorIsEmptyOverlap) {
  ManualClock c;
  AnnotationService svc(small_queue(1), config_with(c));
  svc.next_example("a");
  svc.submit("a", two_groups("q1", "a"));
  auto r = svc.live_agreement();
  EXPECT_TRUE(r.empty_overlap());
  EXPECT_EQ(agreement::to_json(r)["status"], "empty-overlap");
}

TEST(Agreement, ClusterF1OnSharedAnswers) {
  ManualClock c;
  auto cfg = config_with(c);
  cfg.fan_out = 2;
  auto ex = example("q1", {"a", "b", "c"});
  AnnotationService svc({{1, ex, prefill_groups(ex, {0, 0, 1})}}, cfg);
  svc.next_example("gold");
  svc.next_example("pred");
  auto g = two_groups("q1", "gold");
  g.groups[0].member_indices = {0, 1};
  g.groups[1].member_indices = {2};
  auto p = two_groups("q1", "pred");
  p.groups[0].member_indices = {0};
  p.groups[1].member_indices = {1, 2};
  svc.submit("gold", g);
  svc.submit("pred", p);
  auto r = svc.live_agreement();
  ASSERT_TRUE(r.cluster);
  EXPECT_NEAR(r.cluster->mean, 66.6667, 1e-3);
}

// Independent statement of the grouping rules for the property test.
std::set<std::string> oracle_violations(const AnswerGrouping& g, std::size_t n) {
  std::set<std::string> v;
  if (g.ambiguous && g.groups.size() < 2) v.insert("ambiguous-min-groups");
  if (!g.ambiguous && !g.groups.empty()) v.insert("unambiguous-no-groups");
  if (!g.ambiguous && !g.skip_reason) v.insert("skip-reason-required");
  std::map<std::size_t, int> uses;
  std::set<std::string> rewrites;
  for (const auto& grp : g.groups) {
    if (grp.member_indices.empty()) v.insert("group-nonempty");
    bool blank = true;
    std::string key;
    for (char ch : grp.rewritten_question)
      if (ch != ' ') {
        blank = false;
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
    if (blank) v.insert("rewrite-nonempty");
    if (!rewrites.insert(key).second) v.insert("rewrite-distinct");
    for (auto i : grp.member_indices) {
      if (++uses[i] == 2) v.insert("groups-disjoint");
      if (i >= n) v.insert("index-range");
    }
  }
  for (auto i : g.deleted_indices) {
    if (uses.count(i)) v.insert("deleted-disjoint");
    if (i >= n) v.insert("index-range");
  }
  return v;
}

TEST(Submit, AcceptsExactlyTheValidGroupings) {
  ManualClock c;
  constexpr std::size_t n = 5;
  std::vector<QueueEntry> q;
  for (std::size_t i = 0; i < 400; ++i) {
    auto ex = example("q" + std::to_string(i), {"a", "b", "c", "d", "e"});
    q.push_back({i + 1, ex, prefill_groups(ex, {0, 0, 1, 1, 1})});
  }
  AnnotationService svc(q, config_with(c));
  std::mt19937_64 rng(11);
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  const std::vector<std::string> questions = {"Which one?", "which  ONE?", "What color?", " "};
  std::size_t accepted = 0, rejected = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto qid = "q" + std::to_string(i);
    svc.next_example("p");
    AnswerGrouping g;
    g.question_id = qid;
    g.ambiguous = coin(0.8);
    if (!g.ambiguous && coin(0.8)) g.skip_reason = "reason";
    const auto groups = coin(0.7) ? 2 + static_cast<int>(rng() % 2)
                                  : std::uniform_int_distribution<int>(0, 3)(rng);
    for (int k = 0; k < groups; ++k) {
      AnswerGroup grp;
      grp.rewritten_question =
          coin(0.85) ? "Question " + std::to_string(k) + "?" : questions[rng() % questions.size()];
      const auto m = coin(0.9) ? 1 : std::uniform_int_distribution<int>(0, 2)(rng);
      for (int j = 0; j < m; ++j) grp.member_indices.insert(rng() % (coin(0.9) ? n : n + 1));
      g.groups.push_back(grp);
    }
    if (coin(0.3)) g.deleted_indices.insert(rng() % (n + 1));
    const auto expected = oracle_violations(g, n);
    std::string got;
    try {
      svc.submit("p", g);
    } catch (const ValidationError& e) {
      got = e.invariant();
    }
    if (expected.empty()) {
      EXPECT_EQ(got, "") << "rejected a valid grouping for " << qid;
      ++accepted;
    } else {
      EXPECT_TRUE(expected.count(got)) << qid << ": got '" << got << "'";
      ++rejected;
      svc.skip("p", qid);
    }
  }
  EXPECT_GT(accepted, 40u);
  EXPECT_GT(rejected, 40u);
}

class HttpApiTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static_dir_ = temp_dir("static");
    std::ofstream(static_dir_ / "index.html") << "<html>board</html>";
    auto cfg = config_with(clock_);
    cfg.fan_out = 2;
    svc_ = std::make_unique<AnnotationService>(small_queue(2), cfg);
    HttpOptions opts;
    opts.tokens = {{"tok-a", "a"}, {"tok-b", "b"}, {"tok-author", "author"}};
    opts.static_dir = static_dir_.string();
    mount_api(server_, *svc_, opts);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Client client(const std::string& token = "") {
    httplib::Client cli("127.0.0.1", port_);
    if (!token.empty()) cli.set_bearer_token_auth(token);
    return cli;
  }

  static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

  ManualClock clock_;
  fs::path static_dir_;
  std::unique_ptr<AnnotationService> svc_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpApiTest, QueueRequiresToken) {
  auto r = client().Get("/api/queue/next?annotator=a");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 401);
  r = client("bogus").Get("/api/queue/next");
  EXPECT_EQ(r->status, 401);
  r = client("tok-a").Get("/api/queue/next?annotator=b");
  EXPECT_EQ(r->status, 403);
  r = client("tok-a").Get("/api/queue/next?annotator=a");
  ASSERT_EQ(r->status, 200);
  auto j = body(r);
  EXPECT_EQ(j["rank"], 1);
  EXPECT_EQ(j["example"]["question_id"], "q1");
  EXPECT_EQ(j["prefill"].size(), 2u);
  EXPECT_EQ(j["prefill"][0]["rewritten_question"], "What is it q1?");
  EXPECT_EQ(j["lease"]["annotator_id"], "a");
  EXPECT_EQ(j["remaining"], 1);
}

TEST_F(HttpApiTest, SubmitSkipAndErrors) {
  auto a = client("tok-a");
  a.Get("/api/queue/next");
  a.Get("/api/queue/next");

  auto bad = corpus::to_json(two_groups("q1", "a"));
  bad["groups"][1]["answer_indices"] = {1, 2};
  auto r = a.Post("/api/annotations", bad.dump(), "application/json");
  ASSERT_EQ(r->status, 422);
  EXPECT_EQ(body(r)["invariant"], "groups-disjoint");

  r = a.Post("/api/annotations", "{not json", "application/json");
  EXPECT_EQ(r->status, 400);

  r = client("tok-b").Post("/api/annotations", corpus::to_json(two_groups("q1", "b")).dump(),
                           "application/json");
  EXPECT_EQ(r->status, 409);

  r = a.Post("/api/annotations", corpus::to_json(two_groups("q1", "a")).dump(), "application/json");
  ASSERT_EQ(r->status, 201);
  EXPECT_EQ(body(r)["seq"], 1);

  r = a.Post("/api/skips", R"({"question_id": "q2"})", "application/json");
  ASSERT_EQ(r->status, 201);
  EXPECT_EQ(body(r)["seq"], 2);

  r = a.Get("/api/export");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/x-ndjson");
  auto summary = nlohmann::json::parse(r->get_header_value("X-Export-Summary"));
  EXPECT_EQ(summary["n_examples"], 1);
  EXPECT_EQ(summary["n_rewritten_questions"], 2);
  std::istringstream lines(r->body);
  auto rows = corpus::read_jsonl(lines, "http");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].skip_reason, std::string(kDefaultSkipReason));

  r = a.Get("/api/export?vetted_only=true");
  EXPECT_EQ(r->body, "");
  r = a.Get("/api/export?vetted_only=maybe");
  EXPECT_EQ(r->status, 400);
  r = a.Get("/api/export?split=dev");
  EXPECT_EQ(r->status, 400);
}

TEST_F(HttpApiTest, VetIsPrivileged) {
  auto a = client("tok-a");
  a.Get("/api/queue/next");
  a.Post("/api/annotations", corpus::to_json(two_groups("q1", "a")).dump(), "application/json");
  auto edit = corpus::to_json(two_groups("q1", "a"));
  edit["groups"][0]["rewritten_question"] = "What colour is it?";
  auto r = a.Post("/api/vet", edit.dump(), "application/json");
  EXPECT_EQ(r->status, 403);
  r = client("tok-author").Post("/api/vet", edit.dump(), "application/json");
  ASSERT_EQ(r->status, 201);
  r = a.Get("/api/export?vetted_only=true");
  auto rows = [&] {
    std::istringstream in(r->body);
    return corpus::read_jsonl(in, "http");
  }();
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].groups[0].rewritten_question, "What colour is it?");
}

TEST_F(HttpApiTest, ExamplesAgreementStatsAndStatic) {
  auto a = client("tok-a");
  auto b = client("tok-b");
  auto r = a.Get("/api/examples/q2");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["example"]["answers"].size(), 4u);
  EXPECT_EQ(a.Get("/api/examples/zzz")->status, 404);
  EXPECT_EQ(client().Get("/api/examples/q2")->status, 401);

  r = a.Get("/api/agreement");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["status"], "empty-overlap");

  for (auto* cli : {&a, &b}) {
    cli->Get("/api/queue/next");
    auto who = cli == &a ? "a" : "b";
    cli->Post("/api/annotations", corpus::to_json(two_groups("q1", who)).dump(),
              "application/json");
  }
  r = a.Get("/api/agreement");
  auto j = body(r);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_DOUBLE_EQ(j["ambiguity"]["mean"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(j["cluster_f1"]["mean"].get<double>(), 100.0);

  r = a.Get("/api/stats");
  ASSERT_EQ(r->status, 200);
  j = body(r);
  ASSERT_EQ(j["frequency"].size(), 2u);
  EXPECT_EQ(j["frequency"][0]["label"], "Location");
  EXPECT_EQ(j["frequency"][0]["count"], 2);
  EXPECT_EQ(j["cooccurrence"][0]["count"], 2);

  r = client().Get("/index.html");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>board</html>");
}

TEST(HttpOpenMode, AnnotatorNamedInRequest) {
  ManualClock c;
  AnnotationService svc(small_queue(1), config_with(c));
  httplib::Server server;
  mount_api(server, svc, {});
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  EXPECT_EQ(cli.Get("/api/queue/next")->status, 400);
  EXPECT_EQ(cli.Get("/api/queue/next?annotator=x")->status, 200);
  auto g = corpus::to_json(two_groups("q1", "x"));
  EXPECT_EQ(cli.Post("/api/annotations", g.dump(), "application/json")->status, 201);
  server.stop();
  t.join();
}

TEST(Tokens, LoadTokenFile) {
  auto dir = temp_dir("tokens");
  std::ofstream(dir / "t.json") << R"({"abc": "ann-1", "def": "author"})";
  auto t = load_tokens((dir / "t.json").string());
  EXPECT_EQ(t.at("abc"), "ann-1");
  std::ofstream(dir / "bad.json") << R"(["abc"])";
  EXPECT_THROW(load_tokens((dir / "bad.json").string()), ParseError);
}
