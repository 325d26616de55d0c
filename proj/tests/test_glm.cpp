#include <gtest/gtest.h>

#include <cmath>

#include "multical/error.hpp"
#include "multical/glm.hpp"
#include "multical/metrics.hpp"
#include "multical/synth.hpp"

using namespace multical;

namespace {

Portfolio with_columns(std::vector<double> claims, std::vector<double> exposure,
                       std::vector<Column> columns) {
  PortfolioData d = make_portfolio(std::move(claims), std::move(exposure)).data();
  d.features = std::move(columns);
  return Portfolio(std::move(d));
}

double balance(const Portfolio& p, std::span<const double> lambda) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p.exposure()[i] * lambda[i];
  return s / p.total_claims() - 1.0;
}

}  // namespace

TEST(Glm, InterceptOnly) {
  auto p = make_portfolio({0, 1, 3, 0}, {0.5, 1, 2, 0.5});
  const auto m = fit_baseline(p, {});
  const auto lambda = predict(m, p);
  for (double v : lambda) EXPECT_NEAR(v, 4.0 / 4.0, 1e-10);
  EXPECT_TRUE(m.converged);
}

TEST(Glm, BinaryFeatureGivesGroupFrequencies) {
  Column c{"Area", ColumnKind::categorical, {}, {"A", "A", "B", "B", "B"}};
  auto p = with_columns({1, 0, 2, 1, 0}, {1, 1, 0.5, 1, 1}, {c});
  GlmConfig cfg;
  cfg.ridge = 0.0;
  const auto m = fit_baseline(p, {"Area"}, cfg);
  const auto lambda = predict(m, p);
  EXPECT_NEAR(lambda[0], 0.5, 1e-8);
  EXPECT_NEAR(lambda[2], 3.0 / 2.5, 1e-8);
  // B has more exposure, so it is the reference level.
  EXPECT_EQ(m.features[0].levels[m.features[0].reference], "B");
  EXPECT_EQ(m.column_names, std::vector<std::string>{"Area=A"});
}

TEST(Glm, BalanceAndDevianceOnSynthetic) {
  SynthConfig sc;
  sc.n = 20000;
  sc.seed = 3;
  const auto data = generate(sc);
  const auto& p = data.portfolio;
  const auto m = fit_baseline(p, {"x1", "x2", "c1"});
  const auto lambda = predict(m, p);
  EXPECT_LE(std::abs(balance(p, lambda)), 1e-6);
  const auto m0 = fit_baseline(p, {});
  EXPECT_LE(poisson_deviance(p.claims(), p.exposure(), lambda),
            poisson_deviance(p.claims(), p.exposure(), predict(m0, p)));
  EXPECT_EQ(predict(m, p), lambda);
}

TEST(Glm, RecoversCategoricalEffects) {
  SynthConfig sc;
  sc.n = 100000;
  sc.seed = 4;
  sc.numeric_effects = {};
  sc.categorical_effects = {{0.0, 0.3, -0.2}};
  sc.group_kind = SensitiveKind::none;
  const auto data = generate(sc);
  const auto m = fit_baseline(data.portfolio, {"c1"});
  const auto& enc = m.features[0];
  const auto& eff = sc.categorical_effects[0];
  for (std::size_t l = 0; l < enc.levels.size(); ++l) {
    if (l == enc.reference) continue;
    const auto j = static_cast<std::size_t>(enc.column[l]);
    const double truth = eff[l] - eff[enc.reference];
    EXPECT_LE(std::abs(m.coefficients[j] - truth), 3 * m.std_errors[j]) << enc.levels[l];
  }
}

TEST(Glm, NumericFeatureBinned) {
  SynthConfig sc;
  sc.n = 5000;
  const auto data = generate(sc);
  GlmConfig cfg;
  cfg.numeric_bins = 4;
  const auto m = fit_baseline(data.portfolio, {"x1"}, cfg);
  EXPECT_EQ(m.features[0].levels.size(), 4u);
  EXPECT_EQ(m.coefficients.size(), 3u);
}

TEST(Glm, UnseenLevelUsesReference) {
  Column c{"Area", ColumnKind::categorical, {}, {"A", "A", "B", "B", "B"}};
  auto train = with_columns({1, 0, 2, 1, 0}, {1, 1, 0.5, 1, 1}, {c});
  const auto m = fit_baseline(train, {"Area"});
  Column q{"Area", ColumnKind::categorical, {}, {"Z", "A"}};
  auto test = with_columns({0, 0}, {1, 1}, {q});
  GlmPredictStats stats;
  const auto lambda = predict(m, test, &stats);
  EXPECT_EQ(stats.unseen_levels, 1u);
  EXPECT_NEAR(lambda[0], std::exp(m.intercept), 1e-15);
  EXPECT_NEAR(lambda[1], std::exp(m.intercept + m.coefficients[0]), 1e-15);
}

TEST(Glm, RankDeficiencyNamesColumns) {
  Column a{"A", ColumnKind::categorical, {}, {"x", "x", "y", "y", "y"}};
  Column b{"B", ColumnKind::categorical, {}, {"u", "u", "v", "v", "v"}};
  auto p = with_columns({1, 0, 2, 1, 0}, {1, 1, 1, 1, 1}, {a, b});
  try {
    fit_baseline(p, {"A", "B"});
    FAIL();
  } catch (const DomainError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("collinear"), std::string::npos);
    EXPECT_TRUE(what.find("A=x") != std::string::npos || what.find("B=u") != std::string::npos);
  }
}

TEST(Glm, Errors) {
  auto p = make_portfolio({0, 0}, {1, 1});
  EXPECT_THROW(fit_baseline(p, {}), DomainError);
  auto q = make_portfolio({1, 0}, {1, 1});
  EXPECT_THROW(fit_baseline(q, {"missing"}), SchemaError);
}
