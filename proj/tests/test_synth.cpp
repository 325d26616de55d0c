#include <gtest/gtest.h>

#include <cmath>

#include "multical/categorical.hpp"
#include "multical/error.hpp"
#include "multical/metrics.hpp"
#include "multical/synth.hpp"

using namespace multical;

TEST(Synth, Deterministic) {
  SynthConfig sc;
  sc.n = 500;
  sc.seed = 17;
  const auto a = generate(sc), b = generate(sc);
  EXPECT_EQ(a.true_mu, b.true_mu);
  for (std::size_t i = 0; i < a.portfolio.size(); ++i) {
    EXPECT_EQ(a.portfolio.claims()[i], b.portfolio.claims()[i]);
    EXPECT_EQ(a.portfolio.exposure()[i], b.portfolio.exposure()[i]);
  }
  sc.seed = 18;
  EXPECT_NE(generate(sc).true_mu, a.true_mu);
}

TEST(Synth, RecordStreamsIndependentOfN) {
  SynthConfig sc;
  sc.n = 100;
  const auto small = generate(sc);
  sc.n = 200;
  const auto large = generate(sc);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(small.true_mu[i], large.true_mu[i]);
}

TEST(Synth, ExposureRange) {
  SynthConfig sc;
  sc.n = 2000;
  const auto d = generate(sc);
  for (double w : d.portfolio.exposure()) {
    EXPECT_GT(w, 0.05);
    EXPECT_LE(w, 1.0);
  }
  for (double m : d.true_mu) EXPECT_GT(m, 0.0);
}

TEST(Synth, SampleMeanWithinPoissonBound) {
  SynthConfig sc;
  sc.n = 500000;
  sc.seed = 2;
  const auto d = generate(sc);
  const auto& p = d.portfolio;
  double wmu = 0;
  for (std::size_t i = 0; i < p.size(); ++i) wmu += p.exposure()[i] * d.true_mu[i];
  const double W = p.total_exposure();
  // Var(sum N) = sum w mu.
  EXPECT_LE(std::abs(p.total_claims() / W - wmu / W), 3 * std::sqrt(wmu) / W);
}

TEST(Synth, IdentityDistortionIsTrueMean) {
  SynthConfig sc;
  sc.n = 100;
  sc.beta_s = 0.5;
  const auto d = generate(sc);
  EXPECT_EQ(distorted_baseline(d, Distortion{}), d.true_mu);
}

TEST(Synth, DropSRemovesSensitiveTerm) {
  SynthConfig sc;
  sc.n = 100;
  sc.beta_s = 0.5;
  const auto d = generate(sc);
  Distortion dist;
  dist.drop_s = true;
  const auto pi = distorted_baseline(d, dist);
  const auto& s_term = d.terms.back();
  ASSERT_EQ(s_term.first, "S");
  for (std::size_t i = 0; i < pi.size(); ++i) {
    EXPECT_NEAR(std::log(pi[i]), std::log(d.true_mu[i]) - s_term.second[i], 1e-12);
  }
}

TEST(Synth, PowerDistortionGivesMonotoneBias) {
  SynthConfig sc;
  sc.n = 200000;
  sc.group_kind = SensitiveKind::none;
  sc.numeric_effects = {0.6};
  sc.categorical_effects = {};
  const auto d = generate(sc);
  const double total_mu = [&] {
    double s = 0;
    for (std::size_t i = 0; i < d.true_mu.size(); ++i) s += d.portfolio.exposure()[i] * d.true_mu[i];
    return s;
  }();
  auto pi = distorted_baseline(d.true_mu, 1.0, 1.2);
  // Rescale so the power distortion alone drives the bias pattern.
  double total_pi = 0;
  for (std::size_t i = 0; i < pi.size(); ++i) total_pi += d.portfolio.exposure()[i] * pi[i];
  for (auto& v : pi) v *= total_mu / total_pi;
  const auto bins = quantile_bins(pi, d.portfolio.exposure(), 5);
  const auto t = residual_bias_table(d.portfolio, pi, bins, pooled_grouping(pi.size()));
  EXPECT_GT(t.pooled.front().mean_bias, 0.0);
  EXPECT_LT(t.pooled.back().mean_bias, 0.0);
}

TEST(Synth, ContinuousSensitive) {
  SynthConfig sc;
  sc.n = 20000;
  sc.group_kind = SensitiveKind::continuous;
  sc.s_correlation = 0.5;
  const auto d = generate(sc);
  const auto& s = d.portfolio.sensitive();
  ASSERT_EQ(s.kind, SensitiveKind::continuous);
  const auto& x1 = d.portfolio.feature("x1").numeric;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    sxy += x1[i] * s.values[i];
    sxx += x1[i] * x1[i];
    syy += s.values[i] * s.values[i];
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), 0.5, 0.03);
}

TEST(Synth, Validation) {
  SynthConfig sc;
  sc.n = 0;
  EXPECT_THROW(generate(sc), ConfigError);
  sc = {};
  sc.exposure_min = 0.0;
  EXPECT_THROW(generate(sc), ConfigError);
  SynthConfig ok;
  ok.n = 10;
  const auto d = generate(ok);
  Distortion bad;
  bad.scale = 0;
  EXPECT_THROW(distorted_baseline(d, bad), ConfigError);
  Distortion unknown;
  unknown.dropped_features = {"nope"};
  EXPECT_THROW(distorted_baseline(d, unknown), ConfigError);
}
