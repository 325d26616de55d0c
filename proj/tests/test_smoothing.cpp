#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "multical/error.hpp"
#include "multical/smoothing.hpp"

using namespace multical;

namespace {

struct Cloud {
  std::vector<double> p, s, y, w;
};

Cloud cloud(std::size_t n, std::uint64_t seed, double tilt) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Cloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::exp(0.4 * z(rng));
    const double s = z(rng);
    c.p.push_back(p);
    c.s.push_back(s);
    c.w.push_back(u(rng));
    c.y.push_back(std::sin(2 * p) + tilt * s + 0.1 * z(rng));
  }
  return c;
}

}  // namespace

TEST(Local1d, ConstantResponse) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6}, y(6, 3.5), w{1, 2, 1, 2, 1, 2};
  for (auto d : {Degree::constant, Degree::linear}) {
    SmoothConfig cfg;
    cfg.degree = d;
    for (double v : local_mean_1d(x, y, w, x, cfg)) EXPECT_NEAR(v, 3.5, 1e-12);
  }
}

TEST(Local1d, LinearReproducesAffine) {
  std::vector<double> x, y, w;
  for (int i = 1; i <= 100; ++i) {
    x.push_back(i);
    y.push_back(2.0 * i);
    w.push_back(1.0 + (i % 3));
  }
  SmoothConfig cfg;
  const std::vector<double> at{50.5, 10.0, 90.25};
  const auto f = local_mean_1d(x, y, w, at, cfg);
  EXPECT_NEAR(f[0], 101.0, 1e-6);
  EXPECT_NEAR(f[1], 20.0, 1e-8);
  EXPECT_NEAR(f[2], 180.5, 1e-8);
}

TEST(Local1d, FullNeighbourhoodOfEqualDistances) {
  const std::vector<double> x{0, 1, 2}, y{1, 5, 3}, w{1, 1, 1};
  SmoothConfig cfg;
  cfg.alpha = 1.0;
  cfg.degree = Degree::constant;
  const std::vector<double> at{1.0};
  // h = 1: only the middle point is strictly inside.
  EXPECT_NEAR(local_mean_1d(x, y, w, at, cfg)[0], 5.0, 1e-12);
}

TEST(Local1d, ConstantDegreeBounded) {
  auto c = cloud(500, 1, 0.0);
  SmoothConfig cfg;
  cfg.degree = Degree::constant;
  const double lo = *std::min_element(c.y.begin(), c.y.end());
  const double hi = *std::max_element(c.y.begin(), c.y.end());
  for (double v : local_mean_1d(c.p, c.y, c.w, c.p, cfg)) {
    EXPECT_GE(v, lo);
    EXPECT_LE(v, hi);
  }
}

TEST(Local1d, DuplicatedPoint) {
  const std::vector<double> x(10, 2.0), y(10, 7.0), w(10, 1.0);
  const std::vector<double> at{-5, 2, 9};
  for (double v : local_mean_1d(x, y, w, at, {})) EXPECT_NEAR(v, 7.0, 1e-12);
}

TEST(Local1d, TooFewNeighbours) {
  const std::vector<double> x{1, 2, 3}, y{1, 2, 3}, w{1, 1, 1};
  SmoothConfig cfg;
  cfg.alpha = 0.1;
  EXPECT_THROW(local_mean_1d(x, y, w, x, cfg), DomainError);
  cfg.alpha = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Local2d, ConstantAndPOnly) {
  auto c = cloud(3000, 2, 0.0);
  SmoothConfig cfg;
  cfg.alpha = 0.3;
  std::vector<double> flat(c.y.size(), -1.25);
  const std::vector<double> qp{0.8, 1.0, 1.3}, qs{-1.0, 0.0, 1.0};
  for (double v : local_mean_2d(c.p, c.s, flat, c.w, qp, qs, cfg)) EXPECT_NEAR(v, -1.25, 1e-10);
  // y depends on p only: 2-D fit at (p, s) near the 1-D fit at p.
  const auto two = local_mean_2d(c.p, c.s, c.y, c.w, qp, qs, cfg);
  const auto one = local_mean_1d(c.p, c.y, c.w, qp, cfg);
  for (std::size_t j = 0; j < qp.size(); ++j) EXPECT_NEAR(two[j], one[j], 0.05);
}

TEST(Local2d, LinearReproducesPlane) {
  std::vector<double> p, s, y, w;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      p.push_back(i);
      s.push_back(j * 0.1);
      y.push_back(1.0 + 0.5 * i - 3.0 * j * 0.1);
      w.push_back(1.0 + ((i + j) % 4));
    }
  }
  SmoothConfig cfg;
  cfg.alpha = 0.2;
  const std::vector<double> qp{10.3, 15}, qs{1.55, 2.0};
  const auto f = local_mean_2d(p, s, y, w, qp, qs, cfg);
  EXPECT_NEAR(f[0], 1.0 + 0.5 * 10.3 - 3.0 * 1.55, 1e-8);
  EXPECT_NEAR(f[1], 1.0 + 0.5 * 15 - 3.0 * 2.0, 1e-8);
  const auto b = local_mean_2d_binned(p, s, y, w, qp, qs, cfg);
  EXPECT_NEAR(b[0], f[0], 1e-8);
  EXPECT_NEAR(b[1], f[1], 1e-8);
}

TEST(Local2d, BinnedCloseToExact) {
  auto c = cloud(20000, 3, 0.3);
  SmoothConfig cfg;
  const auto exact = fit_surface_2d(c.p, c.s, c.y, c.w, [&] { auto k = cfg; k.bins_2d = 0; return k; }(), 16, 16);
  const auto binned = fit_surface_2d(c.p, c.s, c.y, c.w, cfg, 16, 16);
  double range = 0, diff = 0;
  for (std::size_t j = 0; j < exact.values.size(); ++j) {
    range = std::max(range, std::abs(exact.values[j]));
    diff = std::max(diff, std::abs(exact.values[j] - binned.values[j]));
  }
  EXPECT_LT(diff, 0.01 * range);
}

TEST(Knn, Examples) {
  const std::vector<double> p{0, 1, 2}, s{0, 0, 0}, w{1, 1, 1};
  const auto k2 = knn_local_exposure(p, s, w, 2, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(k2[1], 2.0);
  EXPECT_DOUBLE_EQ(k2[0], 2.0);
  const auto k1 = knn_local_exposure(p, s, std::vector<double>{0.5, 2, 3}, 1, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(k1[0], 0.5);
  EXPECT_DOUBLE_EQ(k1[2], 3.0);
  auto c = cloud(200, 4, 0.0);
  const auto all = knn_local_exposure(c.p, c.s, c.w, 200);
  double total = 0;
  for (double v : c.w) total += v;
  for (double v : all) EXPECT_NEAR(v, total, 1e-9);
  EXPECT_THROW(knn_local_exposure(p, s, w, 4), ConfigError);
}

TEST(Knn, TieBrokenByIndex) {
  // Query at 1: records 0 and 2 are both at distance 1; k=2 takes record 0.
  const std::vector<double> p{0, 1, 2}, s{0, 0, 0}, w{10, 1, 100};
  const auto k2 = knn_local_exposure(p, s, w, 2, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(k2[1], 11.0);
}

TEST(Surface, NodesAndInterpolation) {
  auto c = cloud(2000, 5, 0.2);
  SmoothConfig cfg;
  const auto s = fit_surface_2d(c.p, c.s, c.y, c.w, cfg, 8, 6);
  ASSERT_EQ(s.values.size(), s.grid_p.size() * s.grid_s.size());
  for (std::size_t i = 0; i < s.grid_p.size(); ++i) {
    for (std::size_t j = 0; j < s.grid_s.size(); ++j) {
      EXPECT_EQ(s(s.grid_p[i], s.grid_s[j]), s.at(i, j));
    }
  }
  const double mp = 0.5 * (s.grid_p[2] + s.grid_p[3]);
  const double ms = 0.3 * s.grid_s[1] + 0.7 * s.grid_s[2];
  const double v = s(mp, ms);
  const double lo = std::min({s.at(2, 1), s.at(2, 2), s.at(3, 1), s.at(3, 2)});
  const double hi = std::max({s.at(2, 1), s.at(2, 2), s.at(3, 1), s.at(3, 2)});
  EXPECT_GE(v, lo);
  EXPECT_LE(v, hi);
  // Clamping outside the range.
  EXPECT_EQ(s(-100, -100), s.at(0, 0));
  EXPECT_TRUE(s.outside(-100, 0));
}

TEST(Surface, GridNodes) {
  const std::vector<double> v{3, 1, 2, 2, 1}, w(5, 1.0);
  const auto g = grid_nodes(v, w, 10);
  EXPECT_EQ(g, (std::vector<double>{1, 2, 3}));
  std::vector<double> many, mw;
  for (int i = 0; i < 1000; ++i) {
    many.push_back(i);
    mw.push_back(1.0);
  }
  const auto h = grid_nodes(many, mw, 11);
  EXPECT_EQ(h.size(), 11u);
  EXPECT_EQ(h.front(), 0.0);
  EXPECT_EQ(h.back(), 999.0);
  EXPECT_THROW(grid_nodes(v, w, 1), ConfigError);
}
