#include <cmath>

#include <gtest/gtest.h>

#include "breakline/stats.hpp"

using namespace breakline;

TEST(StudentT, KnownQuantiles) {
  EXPECT_NEAR(student_t_quantile(0.975, 1), 12.7062, 1e-4);
  EXPECT_NEAR(student_t_quantile(0.975, 24), 2.0639, 1e-4);
  EXPECT_NEAR(student_t_quantile(0.90, 24), 1.3178, 1e-4);
  EXPECT_NEAR(student_t_quantile(0.5, 7), 0.0, 1e-12);
  EXPECT_NEAR(student_t_two_sided_p(2.0639, 24), 0.05, 1e-4);
  EXPECT_NEAR(student_t_two_sided_p(-2.0639, 24), 0.05, 1e-4);
}

TEST(Quantile, TypeSevenMatchesHandRanks) {
  // rank q (n - 1) + 1 on 1..5
  std::vector<double> v{5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.1), 1.4);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.9), 4.6);
}

TEST(MeanInterval, ZeroVariance) {
  std::vector<double> v{1, 1, 1, 1};
  const auto m = mean_interval(v);
  EXPECT_DOUBLE_EQ(m.mean, 1.0);
  EXPECT_DOUBLE_EQ(m.lower, 1.0);
  EXPECT_DOUBLE_EQ(m.upper, 1.0);
}

TEST(MeanInterval, TwoPoints) {
  std::vector<double> v{0, 2};
  const auto m = mean_interval(v);
  EXPECT_DOUBLE_EQ(m.mean, 1.0);
  EXPECT_NEAR(m.lower, -11.7062, 1e-4);
  EXPECT_NEAR(m.upper, 13.7062, 1e-4);
}

TEST(Summarize, OverallThenGroups) {
  const auto ds = BivariateDataset::from_points({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10},
                                                {"b", "a", "b", "a", "b"}, "stress", "ibi");
  const auto rows = summarize(ds);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].group, "all");
  EXPECT_EQ(rows[1].group, "a");
  EXPECT_EQ(rows[2].group, "b");
  EXPECT_EQ(rows[0].y.n, 5u);
  EXPECT_DOUBLE_EQ(rows[0].y.mean, 6.0);
  EXPECT_DOUBLE_EQ(rows[1].x.mean, 3.0);
  // group b: x = 1, 3, 5 -> sd 2, half width t(0.975, 2) * 2 / sqrt 3
  const double half = 4.302652729911275 * 2.0 / std::sqrt(3.0);
  EXPECT_NEAR(rows[2].x.upper - rows[2].x.mean, half, 1e-9);
  EXPECT_THROW(summarize(BivariateDataset::from_points({1}, {1})), InputError);
}
