#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "freqlens/aggregate.hpp"

using namespace freqlens;

namespace {

PairExplanation expl(int id, const std::string& group, std::vector<double> normalized,
                     PairLabel label = PairLabel::kGenuine) {
  PairExplanation e;
  e.pair_id = id;
  e.group = group;
  e.label = label;
  e.importance.raw = normalized;
  e.importance.normalized = std::move(normalized);
  return e;
}

GroupImportanceMatrix matrix_of(std::vector<std::string> groups, GroupBandMatrix mean) {
  GroupImportanceMatrix m;
  m.groups = std::move(groups);
  m.num_bands = static_cast<int>(mean.front().size());
  m.stddev.assign(mean.size(), std::vector<double>(m.num_bands, 0.0));
  m.count.assign(mean.size(), 1);
  m.mean = std::move(mean);
  return m;
}

std::vector<double> random_unit_sum(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  for (double& x : v) x = e(rng);
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

TEST(MeanImportance, TwoVectorExample) {
  const std::vector<PairExplanation> in{expl(0, "e", {0.2, 0.8}), expl(1, "e", {0.4, 0.6})};
  const auto m = mean_importance(in);
  ASSERT_EQ(m.groups, (std::vector<std::string>{"e"}));
  EXPECT_NEAR(m.mean[0][0], 0.3, 1e-15);
  EXPECT_NEAR(m.mean[0][1], 0.7, 1e-15);
  EXPECT_NEAR(m.stddev[0][0], 0.1, 1e-15);  // population form
  EXPECT_EQ(m.count, (std::vector<int>{2}));
}

TEST(MeanImportance, SingleExplanation) {
  const std::vector<PairExplanation> in{expl(4, "g", {0.1, 0.2, 0.7})};
  const auto m = mean_importance(in);
  EXPECT_EQ(m.mean[0], (std::vector{0.1, 0.2, 0.7}));
  EXPECT_EQ(m.stddev[0], (std::vector{0.0, 0.0, 0.0}));
}

TEST(MeanImportance, MatchesTwoPassOracle) {
  std::mt19937_64 rng(10);
  std::vector<PairExplanation> in;
  const char* groups[] = {"A", "B", "C"};
  for (int i = 0; i < 300; ++i) in.push_back(expl(i, groups[i % 3], random_unit_sum(rng, 20)));
  const auto m = mean_importance(in);
  ASSERT_EQ(m.groups, (std::vector<std::string>{"A", "B", "C"}));
  for (int g = 0; g < 3; ++g) {
    EXPECT_EQ(m.count[g], 100);
    EXPECT_NEAR(std::accumulate(m.mean[g].begin(), m.mean[g].end(), 0.0), 1.0, 1e-9);
    for (int b = 0; b < 20; ++b) {
      double mean = 0;
      for (int i = g; i < 300; i += 3) mean += in[i].importance.normalized[b];
      mean /= 100;
      double var = 0;
      for (int i = g; i < 300; i += 3) var += std::pow(in[i].importance.normalized[b] - mean, 2);
      EXPECT_NEAR(m.mean[g][b], mean, 1e-9);
      EXPECT_NEAR(m.stddev[g][b], std::sqrt(var / 100), 1e-9);
    }
  }
}

TEST(MeanImportance, InputOrderIrrelevant) {
  std::mt19937_64 rng(11);
  std::vector<PairExplanation> in;
  for (int i = 0; i < 50; ++i) in.push_back(expl(i, i % 2 ? "X" : "Y", random_unit_sum(rng, 5)));
  const auto ref = mean_importance(in);
  std::shuffle(in.begin(), in.end(), rng);
  const auto shuffled = mean_importance(in);
  EXPECT_EQ(shuffled.groups, ref.groups);
  EXPECT_EQ(shuffled.mean, ref.mean);
  EXPECT_EQ(shuffled.stddev, ref.stddev);
}

TEST(MeanImportance, LabelFilter) {
  const std::vector<PairExplanation> in{expl(0, "e", {1, 0}, PairLabel::kGenuine),
                                        expl(1, "e", {0, 1}, PairLabel::kImposter)};
  EXPECT_EQ(mean_importance(in, LabelFilter::kGenuine).mean[0], (std::vector<double>{1, 0}));
  EXPECT_EQ(mean_importance(in, LabelFilter::kImposter).mean[0], (std::vector<double>{0, 1}));
  EXPECT_EQ(mean_importance(in, LabelFilter::kAll).mean[0], (std::vector<double>{0.5, 0.5}));
  const std::vector<PairExplanation> imposters{expl(0, "e", {1, 0}, PairLabel::kImposter)};
  try {
    mean_importance(imposters, LabelFilter::kGenuine);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyInput);
  }
  EXPECT_EQ(parse_label_filter("genuine"), LabelFilter::kGenuine);
  EXPECT_THROW(parse_label_filter("both"), Error);
}

TEST(MeanImportance, MixedBandCounts) {
  const std::vector<PairExplanation> in{expl(0, "e", {0.5, 0.5}), expl(1, "e", {1.0})};
  try {
    mean_importance(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(RankGroups, OrderTiesAndScaling) {
  const auto m = matrix_of({"A", "B", "C"}, {{0.5, 0.4}, {0.3, 0.4}, {0.2, 0.2}});
  const auto t = rank_groups(m);
  EXPECT_EQ(t.ranks[0], (std::vector{1, 1}));
  EXPECT_EQ(t.ranks[1], (std::vector{2, 2}));
  EXPECT_EQ(t.ranks[2], (std::vector{3, 3}));

  auto scaled = m;
  for (auto& row : scaled.mean) row[0] *= 3.7;
  EXPECT_EQ(rank_groups(scaled).ranks, t.ranks);

  EXPECT_THROW(rank_groups(matrix_of({"A"}, {{1.0}})), Error);
}

TEST(RankGroups, ColumnsArePermutations) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coarse(0, 3);  // plenty of ties
  GroupBandMatrix mean(6, std::vector<double>(20));
  for (auto& row : mean) {
    for (double& v : row) v = coarse(rng) * 0.1;
  }
  const auto t = rank_groups(matrix_of({"a", "b", "c", "d", "e", "f"}, mean));
  for (int b = 0; b < 20; ++b) {
    std::vector<int> col;
    for (int g = 0; g < 6; ++g) col.push_back(t.ranks[g][b]);
    std::vector<int> sorted(col);
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector{1, 2, 3, 4, 5, 6}));
    for (int g = 0; g + 1 < 6; ++g) {
      for (int h = g + 1; h < 6; ++h) {
        if (mean[g][b] >= mean[h][b]) {  // ties keep group order
          EXPECT_LT(col[g], col[h]);
        }
      }
    }
  }
}

TEST(ImportanceDeltaTest, Arithmetic) {
  const auto a = matrix_of({"X", "Y"}, {{0.6, 0.4}, {0.2, 0.8}});
  const auto self = importance_delta(a, a);
  for (const auto& row : self.delta) EXPECT_EQ(row, (std::vector{0.0, 0.0}));

  const auto base = matrix_of({"Y", "X"}, {{0.5, 0.5}, {0.5, 0.5}});  // matched by name
  const auto d = importance_delta(a, base);
  EXPECT_EQ(d.groups, a.groups);
  EXPECT_NEAR(d.delta[0][0], 0.1, 1e-15);
  EXPECT_NEAR(d.delta[0][1], -0.1, 1e-15);
  EXPECT_NEAR(d.delta[1][0], -0.3, 1e-15);
}

TEST(ImportanceDeltaTest, RowsSumToZero) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 50; ++t) {
    GroupBandMatrix s, b;
    for (int g = 0; g < 4; ++g) {
      s.push_back(random_unit_sum(rng, 20));
      b.push_back(random_unit_sum(rng, 20));
    }
    const auto d = importance_delta(matrix_of({"a", "b", "c", "d"}, s), matrix_of({"a", "b", "c", "d"}, b));
    for (const auto& row : d.delta) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 0.0, 1e-6);
  }
}

TEST(ImportanceDeltaTest, Incompatible) {
  const auto a = matrix_of({"X", "Y"}, {{0.6, 0.4}, {0.2, 0.8}});
  for (const auto& other : {matrix_of({"X", "Z"}, {{0.6, 0.4}, {0.2, 0.8}}),
                            matrix_of({"X", "Y"}, {{1.0}, {1.0}}), matrix_of({"X"}, {{0.6, 0.4}})}) {
    try {
      importance_delta(a, other);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kIncompatibleReport);
    }
  }
}
