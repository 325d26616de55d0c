#include <gtest/gtest.h>

#include <cmath>

#include "multical/categorical.hpp"
#include "multical/continuous.hpp"
#include "multical/error.hpp"
#include "multical/metrics.hpp"
#include "multical/synth.hpp"

using namespace multical;

namespace {

struct Case {
  SynthData data;
  std::vector<double> premium;
  std::vector<double> s;
};

Case tilted(std::size_t n, std::uint64_t seed, double beta_s) {
  SynthConfig sc;
  sc.n = n;
  sc.seed = seed;
  sc.group_kind = SensitiveKind::continuous;
  sc.beta_s = beta_s;
  sc.intercept = std::log(0.5);
  sc.exposure_min = 0.5;
  Case c{generate(sc), {}, {}};
  Distortion d;
  d.drop_s = true;
  c.premium = distorted_baseline(c.data, d);
  c.s = c.data.portfolio.sensitive().values;
  return c;
}

ContinuousConfig quick() {
  ContinuousConfig cfg;
  cfg.grid_p = 24;
  cfg.grid_s = 24;
  cfg.grid_1d = 64;
  cfg.max_iterations = 60;
  return cfg;
}

// Max over premium deciles of |weighted mean of (x)| / weighted mean premium.
double decile_gap(const Portfolio& p, std::span<const double> premium, std::span<const double> x) {
  const auto bins = quantile_bins(premium, p.exposure(), 10);
  std::vector<double> a(bins.bin_count()), b(bins.bin_count());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto k = bins.bin_of(premium[i]);
    a[k] += p.exposure()[i] * x[i];
    b[k] += p.exposure()[i] * premium[i];
  }
  double worst = 0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] / b[k]));
  return worst;
}

}  // namespace

TEST(ContinuousMode, Names) {
  EXPECT_EQ(parse_continuous_mode("local-mbc"), ContinuousMode::local_mbc);
  EXPECT_EQ(to_string(ContinuousMode::multi_iter_cont), "multi-iter-cont");
  EXPECT_THROW(parse_continuous_mode("nope"), ConfigError);
}

TEST(LocalBalance, RoughlyBalancedAndScaleInvariant) {
  auto c = tilted(4000, 1, 0.0);
  const auto& p = c.data.portfolio;
  auto cfg = quick();
  const auto r = local_balance_correct(p, c.premium, cfg);
  EXPECT_LT(std::abs(global_balance_gap(p.claims(), p.exposure(), r.premium)), 0.01);
  std::vector<double> doubled(c.premium);
  for (auto& v : doubled) v *= 2;
  const auto r2 = local_balance_correct(p, doubled, cfg);
  for (std::size_t i = 0; i < p.size(); i += 97) EXPECT_NEAR(r2.premium[i], r.premium[i], 1e-9);
}

TEST(LocalMbc, ConstantSLeavesBalance) {
  auto c = tilted(3000, 2, 0.0);
  const auto& p = c.data.portfolio;
  std::vector<double> s(p.size(), 0.7);
  auto cfg = quick();
  const auto mbc = mbc_bivariate_centered(p, c.premium, s, cfg);
  const auto bc = local_balance_correct(p, c.premium, cfg);
  // Three local Poisson standard errors, alpha n records per neighbourhood.
  const double local_exposure = cfg.alpha * p.total_exposure();
  for (std::size_t i = 0; i < p.size(); i += 31) {
    EXPECT_NEAR(mbc.premium[i], bc.premium[i], 3 * std::sqrt(bc.premium[i] / local_exposure));
  }
}

TEST(LocalMbc, MarginalConsistencyPerDecile) {
  auto c = tilted(6000, 3, 0.4);
  const auto& p = c.data.portfolio;
  auto cfg = quick();
  const auto r = mbc_bivariate_centered(p, c.premium, c.s, cfg);
  std::vector<double> diff(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) diff[i] = r.premium[i] - (*r.model.balance)(c.premium[i]);
  EXPECT_LE(decile_gap(p, c.premium, diff), 1e-3);
}

TEST(LocalMbc, RecoversTilt) {
  auto c = tilted(20000, 4, 0.3);
  const auto& p = c.data.portfolio;
  auto cfg = quick();
  const auto r = mbc_bivariate_centered(p, c.premium, c.s, cfg);
  // At the median premium the fitted joint surface rises with S.
  const double pm = r.model.balance->grid_p[r.model.balance->grid_p.size() / 2];
  EXPECT_GT((*r.model.joint)(pm, 1.0), (*r.model.joint)(pm, -1.0));
}

TEST(Iterative, ConvergesShrinksAndReplays) {
  auto c = tilted(6000, 5, 0.5);
  const auto& p = c.data.portfolio;
  auto cfg = quick();
  const auto r = iterate_multical_continuous(p, c.premium, c.s, cfg);
  ASSERT_TRUE(r.model.converged);
  for (double v : r.premium) EXPECT_GE(v, cfg.premium_floor);
  for (std::size_t j = 1; j < r.model.z_checksums.size(); ++j) {
    EXPECT_EQ(r.model.z_checksums[j], r.model.z_checksums[0]);
  }
  for (double z : r.model.credibility->values) {
    EXPECT_GE(z, 0.0);
    EXPECT_LE(z, 1.0);
  }
  const auto again = apply_continuous(r.model, c.premium, c.s);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(again[i], r.premium[i], 1e-10);

  const auto g = quantile_grouping(c.s, p.exposure(), 10);
  const auto before = multical_error(residual_bias_table(p, c.premium, r.model.stop_bins_p, g));
  const auto after = multical_error(residual_bias_table(p, r.premium, r.model.stop_bins_p, g));
  EXPECT_LT(after.max_abs, before.max_abs);
}

TEST(Iterative, CalibratedInputStopsImmediately) {
  auto c = tilted(3000, 6, 0.0);
  const auto& p = c.data.portfolio;
  auto cfg = quick();
  cfg.tolerance = 1.0;
  const auto r = iterate_multical_continuous(p, c.premium, c.s, cfg);
  EXPECT_TRUE(r.model.converged);
  EXPECT_TRUE(r.model.steps.empty());
  const auto out = apply_continuous(r.model, c.premium, c.s);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(out[i], c.premium[i]);
}

TEST(Iterative, UnconvergedFlagged) {
  auto c = tilted(3000, 7, 0.5);
  auto cfg = quick();
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-9;
  const auto r = iterate_multical_continuous(c.data.portfolio, c.premium, c.s, cfg);
  EXPECT_FALSE(r.model.converged);
  EXPECT_EQ(r.model.steps.size(), 1u);
}

TEST(Iterative, CenteringPerDecile) {
  auto c = tilted(5000, 8, 0.5);
  const auto& p = c.data.portfolio;
  auto cfg = quick();
  cfg.max_iterations = 3;
  cfg.tolerance = 1e-9;
  const auto r = iterate_multical_continuous(p, c.premium, c.s, cfg);
  std::vector<double> pi(c.premium), centred(p.size());
  const auto& z = *r.model.credibility;
  for (const auto& st : r.model.steps) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      centred[i] = z(pi[i], c.s[i]) * (st.joint(pi[i], c.s[i]) - st.marginal(pi[i])) -
                   st.centering(pi[i]);
    }
    EXPECT_LE(decile_gap(p, pi, centred), 1e-3);
    for (std::size_t i = 0; i < p.size(); ++i) {
      pi[i] = std::max(pi[i] + cfg.eta * (st.marginal(pi[i]) + centred[i]), cfg.premium_floor);
    }
  }
}

TEST(Apply, ClampsOutsideRange) {
  auto c = tilted(3000, 9, 0.3);
  auto cfg = quick();
  const auto r = mbc_bivariate_centered(c.data.portfolio, c.premium, c.s, cfg);
  ContinuousApplyStats stats;
  const std::vector<double> p{1e3, c.premium[0]}, s{0.0, 50.0};
  const auto out = apply_continuous(r.model, p, s, &stats);
  EXPECT_EQ(stats.clamped, 2u);
  EXPECT_TRUE(std::isfinite(out[0]));
}

TEST(Credibility, SearchOnGrid) {
  auto c = tilted(4000, 10, 0.4);
  const std::vector<double> f{0.6, 0.2, 0.2};
  const auto p = split(c.data.portfolio, f, 1);
  const auto tr = p.rows_in(Fold::train), va = p.rows_in(Fold::validation);
  std::vector<double> pt, pv, st, sv;
  for (auto i : tr) {
    pt.push_back(c.premium[i]);
    st.push_back(c.s[i]);
  }
  for (auto i : va) {
    pv.push_back(c.premium[i]);
    sv.push_back(c.s[i]);
  }
  auto cfg = quick();
  cfg.max_iterations = 5;
  const auto search = select_credibility_continuous(p.subset(tr), pt, st, p.subset(va), pv, sv, cfg,
                                                    {1.0, 1e4});
  EXPECT_TRUE(search.best == 1.0 || search.best == 1e4);
  EXPECT_EQ(search.validation_deviance.size(), 2u);
}
