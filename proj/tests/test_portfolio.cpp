#include <gtest/gtest.h>

#include <algorithm>

#include "multical/error.hpp"
#include "multical/portfolio.hpp"

using namespace multical;

TEST(Portfolio, FrequencyIsClaimsOverExposure) {
  auto p = make_portfolio({1.0, 0.0, 3.0}, {0.5, 1.0, 0.25});
  const auto y = p.frequency();
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  EXPECT_DOUBLE_EQ(y[2], 12.0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(y[i] * p.exposure()[i], p.claims()[i]);
}

TEST(Portfolio, RejectsBadRecords) {
  EXPECT_THROW(make_portfolio({1.0}, {0.0}), ValidationError);
  EXPECT_THROW(make_portfolio({-1.0}, {1.0}), ValidationError);
}

TEST(Portfolio, SplitDegenerate) {
  auto p = make_portfolio(std::vector<double>(7, 0.0), std::vector<double>(7, 1.0));
  const std::vector<double> f{1.0, 0.0, 0.0};
  auto s = split(p, f, 3);
  EXPECT_EQ(s.rows_in(Fold::train).size(), 7u);
}

TEST(Portfolio, SplitSizesAndDeterminism) {
  auto p = make_portfolio(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0));
  const std::vector<double> f{0.6, 0.2, 0.2};
  auto a = split(p, f, 42);
  auto b = split(p, f, 42);
  EXPECT_EQ(a.rows_in(Fold::train).size(), 6u);
  EXPECT_EQ(a.rows_in(Fold::validation).size(), 2u);
  EXPECT_EQ(a.rows_in(Fold::test).size(), 2u);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(a.fold(i), b.fold(i));
}

TEST(Portfolio, SplitFractionsMustSumToOne) {
  auto p = make_portfolio({0.0}, {1.0});
  const std::vector<double> f{0.6, 0.2, 0.3};
  EXPECT_THROW(split(p, f, 1), ConfigError);
}

TEST(Portfolio, SplitStratifiesBySensitiveLevel) {
  std::vector<std::string> g;
  for (int i = 0; i < 50; ++i) g.push_back(i < 10 ? "small" : "big");
  auto p = make_portfolio(std::vector<double>(50, 0.0), std::vector<double>(50, 1.0), g);
  const std::vector<double> f{0.6, 0.2, 0.2};
  auto s = split(p, f, 9);
  int small_train = 0, small_test = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g[i] != "small") continue;
    small_train += s.fold(i) == Fold::train;
    small_test += s.fold(i) == Fold::test;
  }
  EXPECT_EQ(small_train, 6);
  EXPECT_EQ(small_test, 2);
}

TEST(Portfolio, SplitKeepsTotals) {
  auto p = make_portfolio({1, 2, 0, 3, 1}, {0.5, 1, 1, 0.2, 0.7});
  const std::vector<double> f{0.6, 0.2, 0.2};
  auto s = split(p, f, 5);
  EXPECT_DOUBLE_EQ(s.total_claims(), p.total_claims());
  EXPECT_DOUBLE_EQ(s.total_exposure(), p.total_exposure());
}

TEST(BinCategorical, RightClosedIntervals) {
  const std::vector<double> edges{3, 9};
  const std::vector<double> v{2, 9, 25, 3, 0.5};
  const auto labels = bin_categorical(v, edges);
  EXPECT_EQ(labels[0], "(0,3]");
  EXPECT_EQ(labels[1], "(3,9]");
  EXPECT_EQ(labels[2], ">9");
  EXPECT_EQ(labels[3], "(0,3]");
  EXPECT_EQ(labels[4], "(0,3]");
}

TEST(BinCategorical, NonAscendingEdgesRejected) {
  const std::vector<double> edges{9, 3};
  const std::vector<double> v{1};
  EXPECT_THROW(bin_categorical(v, edges), ConfigError);
}
