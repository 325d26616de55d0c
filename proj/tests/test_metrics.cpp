#include <gtest/gtest.h>

#include <cmath>

#include "multical/categorical.hpp"
#include "multical/error.hpp"
#include "multical/metrics.hpp"

using namespace multical;

TEST(Deviance, KnownValue) {
  const std::vector<double> n{0, 2}, w{1, 1}, pi{0.5, 1.0};
  const double expected = 2 * ((0.5) + (2 * std::log(2.0) - 2 + 1));
  EXPECT_NEAR(poisson_deviance(n, w, pi), expected, 1e-12);
}

TEST(Deviance, ZeroAtObservedFrequency) {
  const std::vector<double> n{0, 3, 1}, w{1, 2, 0.5}, pi{1e-300, 1.5, 2.0};
  EXPECT_NEAR(poisson_deviance(n, w, pi), 0.0, 1e-12);
}

TEST(Bregman, PoissonMatchesDevianceTerm) {
  const double y = 2.0, m = 0.7;
  const double dev = 2 * (y * std::log(y / m) - y + m);
  EXPECT_NEAR(2 * bregman_loss(y, m, BregmanFamily::poisson), dev, 1e-12);
  EXPECT_NEAR(bregman_loss(y, m, BregmanFamily::gaussian), (y - m) * (y - m), 1e-12);
  EXPECT_NEAR(bregman_loss(0.0, m, BregmanFamily::poisson), m, 1e-12);
}

TEST(Gini, ConstantPremiumIsZero) {
  const std::vector<double> pi(4, 1.0), n{0, 1, 0, 2}, w(4, 1.0);
  EXPECT_NEAR(gini_coefficient(pi, n, w), 0.0, 1e-12);
}

TEST(Gini, PerfectOrdering) {
  // All claims on the highest premium: claim share 0 until the last quarter.
  const std::vector<double> pi{1, 2, 3, 4}, n{0, 0, 0, 1}, w(4, 1.0);
  // Area = 0.5 * 0.25 * 1 = 0.125, Gini = 0.75.
  EXPECT_NEAR(gini_coefficient(pi, n, w), 0.75, 1e-12);
  const std::vector<double> none(4, 0.0);
  EXPECT_THROW(gini_coefficient(pi, none, w), DomainError);
}

TEST(BiasTable, CellStatistics) {
  auto p = make_portfolio({1, 0, 2, 0}, {1, 1, 1, 1}, {"a", "a", "b", "b"});
  const std::vector<double> pi(4, 0.5);
  BinScheme one;
  const auto t = residual_bias_table(p, pi, one, grouping_of(p));
  EXPECT_NEAR(t.cell(0, 0).mean_bias, 0.0, 1e-15);
  EXPECT_NEAR(t.cell(0, 1).mean_bias, 0.5, 1e-15);
  EXPECT_NEAR(t.pooled[0].mean_bias, 0.25, 1e-15);
  EXPECT_NEAR(t.cell(0, 1).std_error, std::sqrt(1.0) / 2.0, 1e-15);
  EXPECT_EQ(multical_error(t).max_abs, 0.5);
  const auto csv = bias_table_csv(t);
  EXPECT_NE(csv.find("pooled"), std::string::npos);
}

TEST(ConvexOrder, MeanPreservingSpread) {
  const std::vector<double> a{1, 1, 1, 1}, b{0, 2, 0.5, 1.5}, w(4, 1.0);
  const auto r = convex_order_check(a, w, b, w, 100);
  EXPECT_TRUE(r.holds());
  const auto back = convex_order_check(b, w, a, w, 100);
  EXPECT_FALSE(back.holds());
}

TEST(ConvexOrder, DifferentMeansFail) {
  const std::vector<double> a{1, 1}, b{2, 2}, w(2, 1.0);
  EXPECT_FALSE(convex_order_check(a, w, b, w).means_match);
}

TEST(GlobalBalance, Gap) {
  const std::vector<double> n{1, 1}, w{1, 1}, pi{1.5, 1.5};
  EXPECT_NEAR(global_balance_gap(n, w, pi), 0.5, 1e-15);
}
