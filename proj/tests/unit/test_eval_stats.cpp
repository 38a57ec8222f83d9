#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ambiq/eval/statistics.hpp"

using namespace ambiq;
using namespace ambiq::eval;
using corpus::OntologyLabel;

TEST(McNemar, EqualDiscordantCountsGiveOne) {
  for (std::size_t b : {1u, 3u, 12u}) {
    auto r = mcnemar(b, b);
    EXPECT_EQ(r.method, McNemarMethod::exact);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  }
}

TEST(McNemar, ExactFixture) {
  // 2 * (C(10,0) + C(10,1) + C(10,2)) / 2^10.
  auto r = mcnemar(2, 8);
  EXPECT_EQ(r.method, McNemarMethod::exact);
  EXPECT_NEAR(r.p_value, 0.109375, 1e-12);
}

TEST(McNemar, ChiSquareFixture) {
  auto r = mcnemar(40, 10);
  EXPECT_EQ(r.method, McNemarMethod::chi_square);
  EXPECT_NEAR(r.statistic, 29.0 * 29.0 / 50.0, 1e-12);
  EXPECT_NEAR(r.statistic, 16.82, 1e-12);
  EXPECT_LT(r.p_value, 0.001);
  // Upper tail of chi-square(1) at 16.82, cross-checked with scipy.stats.chi2.sf.
  EXPECT_NEAR(r.p_value, 4.1097e-05, 1e-8);
}

TEST(McNemar, SwitchesAtTwentyFive) {
  EXPECT_EQ(mcnemar(12, 12).method, McNemarMethod::exact);
  EXPECT_EQ(mcnemar(12, 13).method, McNemarMethod::chi_square);
}

TEST(McNemar, DegenerateAndFromOutcomes) {
  auto r = mcnemar(0, 0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);

  PairedOutcomes o{{true, false}, {true, false}, {false, true}, {true, true}, {false, false}};
  auto c = count_pairs(o);
  EXPECT_EQ(c.a_only, 2u);
  EXPECT_EQ(c.b_only, 1u);
  EXPECT_EQ(c.n(), o.size());
  EXPECT_EQ(mcnemar(o).b, 2u);
  EXPECT_THROW(mcnemar(PairedOutcomes{}), ArgumentError);
}

TEST(McNemar, ExactPValuesInRangeAndSymmetric) {
  for (std::size_t b = 0; b < 25; ++b)
    for (std::size_t c = 0; b + c < 25; ++c) {
      auto x = mcnemar(b, c), y = mcnemar(c, b);
      ASSERT_GT(x.p_value, 0.0);
      ASSERT_LE(x.p_value, 1.0);
      ASSERT_DOUBLE_EQ(x.p_value, y.p_value);
    }
}

TEST(Quantile, LinearInterpolation) {
  std::vector<double> xs{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 0.25), 1.75);
}

namespace {

std::vector<bool> outcomes(std::size_t n, std::size_t hits) {
  std::vector<bool> v(n, false);
  for (std::size_t i = 0; i < hits; ++i) v[i] = true;
  return v;
}

}  // namespace

TEST(Bootstrap, ConstantInputs) {
  auto t = bootstrap_ci(outcomes(50, 50), 1000, 0.95, 3);
  EXPECT_DOUBLE_EQ(t.lo, 1.0);
  EXPECT_DOUBLE_EQ(t.hi, 1.0);
  auto f = bootstrap_ci(outcomes(50, 0), 1000, 0.95, 3);
  EXPECT_DOUBLE_EQ(f.lo, 0.0);
  EXPECT_DOUBLE_EQ(f.hi, 0.0);
}

TEST(Bootstrap, SeventyPercent) {
  auto ci = bootstrap_ci(outcomes(100, 70), 10000, 0.95, 0);
  EXPECT_LE(ci.lo, 0.70);
  EXPECT_GE(ci.hi, 0.70);
  // Normal approximation: 0.7 +- 1.96 * sqrt(0.21 / 100) = (0.610, 0.790).
  const double half = 1.96 * std::sqrt(0.7 * 0.3 / 100.0);
  EXPECT_NEAR(ci.lo, 0.7 - half, 0.02);
  EXPECT_NEAR(ci.hi, 0.7 + half, 0.02);
}

TEST(Bootstrap, DeterministicPerSeed) {
  auto a = bootstrap_ci(outcomes(40, 13), 2000, 0.9, 17);
  auto b = bootstrap_ci(outcomes(40, 13), 2000, 0.9, 17);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
}

TEST(Bootstrap, WidthHalvesWhenSampleQuadruples) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double w1 = bootstrap_ci(outcomes(100, 70), 10000, 0.95, seed).width();
    const double w4 = bootstrap_ci(outcomes(400, 280), 10000, 0.95, seed).width();
    EXPECT_NEAR(w4 / w1, 0.5, 0.5 * 0.15) << "seed " << seed;
  }
}

TEST(Bootstrap, BoundsContainMeanProperty) {
  std::mt19937 rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<bool> xs(n);
    for (auto&& x : xs) x = rng() % 2;
    const double level = 0.5 + 0.49 * (rng() % 100) / 100.0;
    auto ci = bootstrap_ci(xs, 500, level, t);
    ASSERT_GE(ci.lo, 0.0);
    ASSERT_LE(ci.hi, 1.0);
    ASSERT_LE(ci.lo, mean_of(xs));
    ASSERT_GE(ci.hi, mean_of(xs));
  }
}

TEST(Bootstrap, Errors) {
  EXPECT_THROW(bootstrap_ci({}), ArgumentError);
  EXPECT_THROW(bootstrap_ci({true}, 0), ArgumentError);
  EXPECT_THROW(bootstrap_ci({true}, 10, 1.0), ArgumentError);
}

namespace {

corpus::AnswerGrouping labeled(std::vector<std::set<OntologyLabel>> group_labels) {
  corpus::AnswerGrouping g;
  g.ambiguous = true;
  std::size_t idx = 0;
  for (auto& ls : group_labels) {
    corpus::AnswerGroup grp;
    grp.rewritten_question = "q";
    grp.member_indices = {idx++};
    grp.answer_texts = {"x"};
    grp.labels = ls;
    g.groups.push_back(grp);
  }
  return g;
}

}  // namespace

TEST(CategoryStats, SinglePairIsFilteredOut) {
  auto s = category_stats({labeled({{OntologyLabel::Cause}, {OntologyLabel::Purpose}})});
  EXPECT_EQ(s.frequency.at(OntologyLabel::Cause), 1u);
  EXPECT_EQ(s.frequency.at(OntologyLabel::Purpose), 1u);
  EXPECT_EQ(s.pair_count(OntologyLabel::Purpose, OntologyLabel::Cause), 1u);
  EXPECT_TRUE(s.reported_cooccurrence().empty());
}

TEST(CategoryStats, RepeatedPairIsReported) {
  auto g = labeled({{OntologyLabel::Cause, OntologyLabel::Purpose}, {OntologyLabel::Cause}});
  auto s = category_stats({g, g});
  // Labels are a set per example, so repeated labels across groups count once.
  EXPECT_EQ(s.frequency.at(OntologyLabel::Cause), 2u);
  auto rep = s.reported_cooccurrence();
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ((rep.at({OntologyLabel::Cause, OntologyLabel::Purpose})), 2u);
}

TEST(CategoryStats, RankedAndBoundedProperty) {
  std::mt19937 rng(8);
  std::vector<corpus::AnswerGrouping> gs;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::set<OntologyLabel>> groups(2);
    for (auto& ls : groups)
      for (int j = 0; j < 1 + static_cast<int>(rng() % 3); ++j)
        ls.insert(corpus::kAllLabels[rng() % corpus::kAllLabels.size()]);
    gs.push_back(labeled(groups));
  }
  auto s = category_stats(gs);
  for (auto a : corpus::kAllLabels)
    for (auto b : corpus::kAllLabels) {
      if (a == b) continue;
      ASSERT_EQ(s.pair_count(a, b), s.pair_count(b, a));
      auto fa = s.frequency.count(a) ? s.frequency.at(a) : 0u;
      auto fb = s.frequency.count(b) ? s.frequency.at(b) : 0u;
      ASSERT_LE(s.pair_count(a, b), std::min(fa, fb));
    }
  auto ranked = s.ranked();
  for (std::size_t i = 1; i < ranked.size(); ++i)
    ASSERT_GE(s.frequency.at(ranked[i - 1]), s.frequency.at(ranked[i]));
}

TEST(WhyCrosstab, Fixtures) {
  EXPECT_EQ(why_crosstab({}).total(), 0u);

  auto one = why_crosstab({{true, true, true}});
  EXPECT_EQ(one.at(true, true, true), 1u);
  EXPECT_EQ(one.total(), 1u);

  std::mt19937 rng(117);
  std::vector<WhyRecord> rs(117);
  for (auto& r : rs) r = {rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0};
  auto t = why_crosstab(rs);
  EXPECT_EQ(t.total(), 117u);
  std::size_t manual = 0;
  for (bool d : {false, true})
    for (bool a : {false, true})
      for (bool amb : {false, true}) manual += t.at(d, a, amb);
  EXPECT_EQ(manual, 117u);
}

TEST(Acceptability, OnlyYesCounts) {
  using corpus::Confidence;
  std::vector<AcceptabilityJudgment> js;
  for (int i = 0; i < 10; ++i) {
    const auto id = std::to_string(i);
    js.push_back({id, "model", true, i < 8 ? Confidence::yes : Confidence::maybe,
                  OntologyLabel::Location});
    js.push_back({id, "model", false, i < 2 ? Confidence::yes : Confidence::no,
                  OntologyLabel::Location});
    js.push_back({id, "original", true, Confidence::yes, std::nullopt});
    js.push_back({id, "original", false, Confidence::yes, std::nullopt});
  }
  auto rows = acceptability_summary(js, true, 1000, 0.95, 1);
  ASSERT_EQ(rows.size(), 3u);
  const auto& model = rows[0];
  EXPECT_EQ(model.question_type, "model");
  EXPECT_FALSE(model.category.has_value());
  EXPECT_DOUBLE_EQ(model.actual.rate, 0.8);
  EXPECT_DOUBLE_EQ(model.distractor.rate, 0.2);
  EXPECT_EQ(model.paired_items, 10u);
  // Items 2..7: actual yes, distractor not -> b = 6, c = 0.
  EXPECT_EQ(model.test.b, 6u);
  EXPECT_EQ(model.test.c, 0u);
  EXPECT_NEAR(model.test.p_value, 2.0 / 64.0, 1e-12);

  EXPECT_EQ(rows[1].category, OntologyLabel::Location);
  const auto& original = rows[2];
  EXPECT_DOUBLE_EQ(original.actual.rate, 1.0);
  EXPECT_DOUBLE_EQ(original.test.p_value, 1.0);
  EXPECT_TRUE(original.test.degenerate);
}
