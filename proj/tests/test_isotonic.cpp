#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "multical/error.hpp"
#include "multical/isotonic.hpp"

using namespace multical;

namespace {

std::vector<double> fitted(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& w) {
  return evaluate(weighted_isotonic_fit(x, y, w), x);
}

// Minimum over all partitions of sorted points into consecutive blocks whose
// weighted means are non-decreasing; the isotonic solution is one of them.
std::vector<double> brute_force(const std::vector<double>& y, const std::vector<double>& w) {
  const std::size_t n = y.size();
  double best = INFINITY;
  std::vector<double> out;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<double> fit(n);
    std::size_t start = 0;
    double prev = -INFINITY, loss = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (i == n - 1 || (mask >> i & 1u)) {
        double sw = 0, sy = 0;
        for (std::size_t j = start; j <= i; ++j) {
          sw += w[j];
          sy += w[j] * y[j];
        }
        const double m = sy / sw;
        if (m < prev - 1e-12) ok = false;
        prev = m;
        for (std::size_t j = start; j <= i; ++j) {
          fit[j] = m;
          loss += w[j] * (y[j] - m) * (y[j] - m);
        }
        start = i + 1;
      }
    }
    if (ok && loss < best) {
      best = loss;
      out = fit;
    }
  }
  return out;
}

}  // namespace

TEST(Isotonic, MonotoneInputUnchanged) {
  const auto f = fitted({1, 2}, {1, 3}, {1, 1});
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], 3.0);
}

TEST(Isotonic, PoolsViolators) {
  const auto f = fitted({1, 2}, {3, 1}, {1, 1});
  EXPECT_DOUBLE_EQ(f[0], 2.0);
  EXPECT_DOUBLE_EQ(f[1], 2.0);
}

TEST(Isotonic, WeightedPool) {
  const auto f = fitted({1, 2, 3}, {1, 4, 2}, {1, 1, 2});
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_NEAR(f[1], 8.0 / 3.0, 1e-15);
  EXPECT_NEAR(f[2], 8.0 / 3.0, 1e-15);
}

TEST(Isotonic, Errors) {
  EXPECT_THROW(fitted({}, {}, {}), DomainError);
  EXPECT_THROW(fitted({1, NAN}, {1, 2}, {1, 1}), ValidationError);
}

TEST(Isotonic, MatchesBruteForceAndBalances) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> x(n), y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(i);
      y[i] = std::round(10 * u(rng)) / 2;
      w[i] = 5.0 * (1.0 - u(rng));
    }
    const auto f = fitted(x, y, w);
    const auto g = brute_force(y, w);
    double sf = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(f[i], g[i], 1e-9);
      if (i > 0) EXPECT_LE(f[i - 1], f[i]);
      sf += w[i] * f[i];
      sy += w[i] * y[i];
    }
    EXPECT_NEAR(sf, sy, 1e-9 * std::max(1.0, std::abs(sy)));
  }
}

TEST(Isotonic, StepEvalClamps) {
  const auto f = weighted_isotonic_fit(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3},
                                       std::vector<double>{1, 1, 1});
  EXPECT_DOUBLE_EQ(step_eval(f, -10), 1.0);
  EXPECT_DOUBLE_EQ(step_eval(f, 10), 3.0);
  EXPECT_DOUBLE_EQ(step_eval(f, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(step_eval(f, 1.5), 2.0);
}

TEST(Isotonic, TiedPredictorsMerged) {
  const auto f = fitted({1, 1, 2}, {0, 2, 3}, {1, 1, 1});
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], 1.0);
  EXPECT_DOUBLE_EQ(f[2], 3.0);
}
