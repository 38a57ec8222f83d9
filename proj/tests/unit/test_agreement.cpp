#include <random>

#include <gtest/gtest.h>

#include "ambiq/agreement/agreement.hpp"
#include "oracles/brute_force.hpp"

using namespace ambiq;
using namespace ambiq::agreement;

TEST(Hungarian, TwoByTwo) {
  // Brute force: 4+3 = 7 beats 1+2 = 3.
  WeightMatrix w{{4, 1}, {2, 3}};
  ASSERT_EQ(oracle::max_assignment(w), 7);
  auto m = hungarian_max(w);
  EXPECT_EQ(m.total_overlap, 7);
  EXPECT_EQ(m.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
}

TEST(Hungarian, Diagonal) {
  auto m = hungarian_max({{5, 0, 0}, {0, 5, 0}, {0, 0, 5}});
  EXPECT_EQ(m.total_overlap, 15);
  EXPECT_EQ(m.pairs.size(), 3u);
  for (auto [i, j] : m.pairs) EXPECT_EQ(i, j);
}

TEST(Hungarian, SingleRowIsArgmax) {
  auto m = hungarian_max({{2, 9, 4}});
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(m.total_overlap, 9);
}

TEST(Hungarian, Errors) {
  EXPECT_THROW(hungarian_max({}), ArgumentError);
  EXPECT_THROW(hungarian_max({{1, 2}, {3}}), ArgumentError);
}

TEST(Hungarian, MatchesPermutationSearch) {
  std::mt19937 rng(1955);
  for (int t = 0; t < 300; ++t) {
    const std::size_t rows = 1 + rng() % 6, cols = 1 + rng() % 6;
    WeightMatrix w(rows, std::vector<std::int64_t>(cols));
    for (auto& r : w)
      for (auto& x : r) x = rng() % 10;
    auto m = hungarian_max(w);
    ASSERT_EQ(m.total_overlap, oracle::max_assignment(w));
    ASSERT_EQ(m.pairs.size(), std::min(rows, cols));
    std::set<std::size_t> rs, cs;
    for (auto [i, j] : m.pairs) {
      ASSERT_TRUE(rs.insert(i).second);
      ASSERT_TRUE(cs.insert(j).second);
    }
  }
}

using P = Partition<char>;

TEST(ClusterF1, IdenticalPartitions) {
  P x{{'a', 'b'}, {'c'}, {'d', 'e', 'f'}};
  auto r = cluster_f1(x, x);
  EXPECT_DOUBLE_EQ(r.precision, 100.0);
  EXPECT_DOUBLE_EQ(r.recall, 100.0);
  EXPECT_DOUBLE_EQ(r.f1, 100.0);
}

TEST(ClusterF1, SplitFixture) {
  // Both alignments of the 2x2 overlap matrix [[1,0],[1,1]]: diagonal = 2,
  // anti-diagonal = 1. Aligned pairs ({a},{a,b}) P=1 R=1/2 and
  // ({b,c},{c}) P=1/2 R=1, so P = R = 75 and F1 = mean(2/3, 2/3).
  P gold{{'a', 'b'}, {'c'}};
  P pred{{'a'}, {'b', 'c'}};
  auto r = cluster_f1(pred, gold);
  EXPECT_DOUBLE_EQ(r.precision, 75.0);
  EXPECT_DOUBLE_EQ(r.recall, 75.0);
  EXPECT_NEAR(r.f1, 200.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(round1(r.f1), 66.7);
}

TEST(ClusterF1, Errors) {
  EXPECT_THROW(cluster_f1(P{}, P{{'a'}}), ArgumentError);
  EXPECT_THROW(cluster_f1(P{{'a'}}, P{}), ArgumentError);
}

namespace {

Partition<int> random_partition(std::mt19937& rng, int n) {
  const int k = 1 + rng() % n;
  Partition<int> p(k);
  for (int i = 0; i < n; ++i) p[i < k ? i : rng() % k].push_back(i);
  return p;
}

}  // namespace

TEST(ClusterF1, Properties) {
  std::mt19937 rng(3);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + rng() % 10;
    auto a = random_partition(rng, n), b = random_partition(rng, n);

    auto self = cluster_f1(a, a);
    ASSERT_DOUBLE_EQ(self.f1, 100.0);

    auto ab = cluster_f1(a, b), ba = cluster_f1(b, a);
    ASSERT_NEAR(ab.precision, ba.recall, 1e-9);
    ASSERT_NEAR(ab.recall, ba.precision, 1e-9);
    ASSERT_NEAR(ab.f1, ba.f1, 1e-9);

    // Cluster order and bijective item renaming do not matter.
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<int> rename(n);
    std::iota(rename.begin(), rename.end(), 100);
    std::shuffle(rename.begin(), rename.end(), rng);
    auto relabel = [&](Partition<int> p) {
      for (auto& c : p)
        for (auto& x : c) x = rename[x];
      return p;
    };
    auto moved = cluster_f1(relabel(shuffled), relabel(b));
    ASSERT_NEAR(moved.f1, ab.f1, 1e-9);
    ASSERT_NEAR(moved.precision, ab.precision, 1e-9);

    Partition<int> singletons, one(1);
    for (int i = 0; i < n; ++i) {
      singletons.push_back({i});
      one[0].push_back(i);
    }
    ASSERT_DOUBLE_EQ(cluster_f1(singletons, b).precision, 100.0);
    ASSERT_DOUBLE_EQ(cluster_f1(one, b).recall, 100.0);

    for (double v : {ab.precision, ab.recall, ab.f1}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 100.0);
    }
  }
}

TEST(ClusterF1, MicroAggregation) {
  P gold{{'a', 'b'}, {'c'}};
  P pred{{'a'}, {'b', 'c'}};
  auto r = cluster_f1(pred, gold, Aggregation::micro);
  // Aligned intersections 1 + 1 over pred sizes 1 + 2 and gold sizes 2 + 1.
  EXPECT_NEAR(r.precision, 200.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.recall, 200.0 / 3.0, 1e-12);
}

TEST(AmbiguityAgreement, Fixtures) {
  std::map<int, bool> all{{1, true}, {2, true}, {3, true}, {4, true}};
  EXPECT_DOUBLE_EQ(ambiguity_agreement(all, all), 100.0);

  std::map<int, bool> a{{1, true}, {2, true}, {3, true}, {4, false}};
  std::map<int, bool> b{{1, false}, {2, true}, {3, true}, {4, true}};
  EXPECT_DOUBLE_EQ(ambiguity_agreement(a, b), 50.0);

  std::map<int, bool> c{{1, true}, {2, false}};
  std::map<int, bool> d{{1, false}, {2, true}};
  EXPECT_DOUBLE_EQ(ambiguity_agreement(c, d), 0.0);

  EXPECT_THROW(ambiguity_agreement(std::map<int, bool>{{1, true}},
                                   std::map<int, bool>{{2, true}}),
               ArgumentError);
}

TEST(AmbiguityAgreement, ObservedVariantCountsBothUnambiguous) {
  std::map<int, bool> a{{1, true}, {2, false}, {3, false}, {4, true}};
  std::map<int, bool> b{{1, true}, {2, false}, {3, true}, {4, false}};
  EXPECT_DOUBLE_EQ(ambiguity_agreement(a, b), 25.0);
  EXPECT_DOUBLE_EQ(observed_agreement(a, b), 50.0);
}

TEST(PairwiseSummary, TwoAnnotators) {
  std::vector<double> ann{60.0, 80.0};
  auto s = pairwise_summary(ann, [](double x, double y) { return (x + y) / 2; });
  EXPECT_DOUBLE_EQ(s.mean, 70.0);
  EXPECT_DOUBLE_EQ(s.std, 0.0);
  EXPECT_EQ(s.pairs.size(), 1u);
}

TEST(PairwiseSummary, ThreePairValues) {
  // Pair values 60, 70, 80: population std = sqrt(200 / 3).
  auto s = summarize({{0, 1, 60.0}, {0, 2, 70.0}, {1, 2, 80.0}});
  EXPECT_DOUBLE_EQ(s.mean, 70.0);
  EXPECT_NEAR(s.std, std::sqrt(200.0 / 3.0), 1e-12);
  EXPECT_NEAR(s.std, 8.165, 5e-4);
  EXPECT_EQ(s.min, 60.0);
  EXPECT_EQ(s.max, 80.0);
}

TEST(PairwiseSummary, IdenticalAnnotatorsAgreeFully) {
  std::map<int, bool> m{{1, true}, {2, true}};
  std::vector<std::map<int, bool>> ann{m, m, m};
  auto s = pairwise_summary(ann, [](const auto& a, const auto& b) {
    return ambiguity_agreement(a, b);
  });
  EXPECT_EQ(s.pairs.size(), 3u);
  EXPECT_DOUBLE_EQ(s.mean, 100.0);
  EXPECT_DOUBLE_EQ(s.std, 0.0);
}

TEST(PairwiseSummary, NeedsTwo) {
  std::vector<double> one{1.0};
  EXPECT_THROW(pairwise_summary(one, [](double, double) { return 0.0; }), ArgumentError);
}
