#include "multical/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "multical/csv.hpp"
#include "multical/error.hpp"

namespace multical {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ValidationError("metric inputs differ in length");
}

}  // namespace

double poisson_deviance(std::span<const double> claims, std::span<const double> exposure,
                        std::span<const double> premium) {
  check_lengths(claims.size(), exposure.size(), premium.size());
  double d = 0.0;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    if (!(premium[i] > 0.0)) {
      throw DomainError(fmt::format("poisson deviance: premium must be positive (row {})", i));
    }
    const double mu = exposure[i] * premium[i];
    const double n = claims[i];
    d += (n > 0.0 ? n * std::log(n / mu) : 0.0) - n + mu;
  }
  return 2.0 * d;
}

double gini_coefficient(std::span<const double> premium, std::span<const double> claims,
                        std::span<const double> exposure) {
  check_lengths(claims.size(), exposure.size(), premium.size());
  const double total_claims = std::accumulate(claims.begin(), claims.end(), 0.0);
  const double total_exposure = std::accumulate(exposure.begin(), exposure.end(), 0.0);
  if (!(total_claims > 0.0)) throw DomainError("gini coefficient undefined: no claims");

  std::vector<std::size_t> order(premium.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return premium[a] < premium[b]; });

  double area = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::size_t j = 0;
  while (j < order.size()) {
    double dw = 0.0;
    double dn = 0.0;
    const double p = premium[order[j]];
    while (j < order.size() && premium[order[j]] == p) {
      dw += exposure[order[j]];
      dn += claims[order[j]];
      ++j;
    }
    const double x_next = x + dw / total_exposure;
    const double y_next = y + dn / total_claims;
    area += (x_next - x) * (y + y_next) / 2.0;
    x = x_next;
    y = y_next;
  }
  return 1.0 - 2.0 * area;
}

double bregman_loss(double y, double m, BregmanFamily family) {
  switch (family) {
    case BregmanFamily::gaussian:
      return (y - m) * (y - m);
    case BregmanFamily::poisson: {
      if (!(m > 0.0)) throw DomainError("poisson Bregman loss needs m > 0");
      if (y < 0.0) throw DomainError("poisson Bregman loss needs y >= 0");
      // l(y) - l(m) - l'(m)(y - m) with l'(m) = ln m.
      const double ly = y > 0.0 ? y * std::log(y) - y : 0.0;
      const double lm = m * std::log(m) - m;
      return ly - lm - std::log(m) * (y - m);
    }
  }
  return 0.0;
}

BiasTable residual_bias_table(const Portfolio& portfolio, std::span<const double> premium,
                              const BinScheme& bins, const Grouping& grouping) {
  const std::size_t n = portfolio.size();
  if (premium.size() != n || grouping.codes.size() != n) {
    throw ValidationError("residual_bias_table: inputs not aligned with portfolio");
  }
  BiasTable t;
  t.bins = bins;
  t.groups = grouping.levels;
  const std::size_t K = bins.bin_count();
  const std::size_t G = grouping.level_count();

  struct Acc {
    double w = 0.0, residual = 0.0, wp = 0.0;
  };
  std::vector<Acc> acc(K * G);
  const auto claims = portfolio.claims();
  const auto exposure = portfolio.exposure();
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = acc[bins.bin_of(premium[i]) * G + static_cast<std::size_t>(grouping.codes[i])];
    a.w += exposure[i];
    a.residual += claims[i] - exposure[i] * premium[i];
    a.wp += exposure[i] * premium[i];
  }

  auto make_cell = [](std::size_t k, std::string group, const Acc& a) {
    BiasCell c;
    c.bin = k;
    c.group = std::move(group);
    c.exposure = a.w;
    if (a.w > 0.0) {
      c.mean_bias = a.residual / a.w;
      c.mean_premium = a.wp / a.w;
      c.std_error = std::sqrt(a.wp) / a.w;
    }
    return c;
  };

  t.cells.reserve(K * G);
  for (std::size_t k = 0; k < K; ++k) {
    Acc pooled;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < G; ++g) {
      const auto& a = acc[k * G + g];
      t.cells.push_back(make_cell(k, grouping.levels[g], a));
      pooled.w += a.w;
      pooled.residual += a.residual;
      pooled.wp += a.wp;
      if (a.w > 0.0) {
        lo = std::min(lo, t.cells.back().mean_bias);
        hi = std::max(hi, t.cells.back().mean_bias);
      }
    }
    t.pooled.push_back(make_cell(k, "pooled", pooled));
    if (pooled.w == 0.0) lo = hi = 0.0;
    t.envelope.emplace_back(lo, hi);
  }
  return t;
}

Grouping quantile_grouping(std::span<const double> values, std::span<const double> exposure,
                           std::size_t bins) {
  const auto scheme = quantile_bins(values, exposure, bins);
  Grouping g;
  for (std::size_t k = 0; k < scheme.bin_count(); ++k) g.levels.push_back(fmt::format("q{}", k + 1));
  g.codes.reserve(values.size());
  for (double v : values) g.codes.push_back(static_cast<int>(scheme.bin_of(v)));
  return g;
}

std::string bias_table_csv(const BiasTable& table) {
  std::string out = "bin_index,bin_lo,bin_hi,group,exposure,mean_bias\n";
  const auto& edges = table.bins.edges;
  auto lo_of = [&](std::size_t k) { return k == 0 ? table.bins.lo : edges[k - 1]; };
  auto hi_of = [&](std::size_t k) { return k < edges.size() ? edges[k] : table.bins.hi; };
  auto row = [&](const BiasCell& c) {
    out += fmt::format("{},{},{},{},{},{}\n", c.bin, format_double(lo_of(c.bin)),
                       format_double(hi_of(c.bin)), quote_if_needed(c.group), format_double(c.exposure),
                       format_double(c.mean_bias));
  };
  for (const auto& c : table.cells) row(c);
  for (const auto& c : table.pooled) row(c);
  for (std::size_t k = 0; k < table.envelope.size(); ++k) {
    const double w = table.pooled[k].exposure;
    out += fmt::format("{},{},{},envelope_min,{},{}\n", k, format_double(lo_of(k)),
                       format_double(hi_of(k)), format_double(w),
                       format_double(table.envelope[k].first));
    out += fmt::format("{},{},{},envelope_max,{},{}\n", k, format_double(lo_of(k)),
                       format_double(hi_of(k)), format_double(w),
                       format_double(table.envelope[k].second));
  }
  return out;
}

MulticalError multical_error(const BiasTable& table) {
  MulticalError e;
  double total = 0.0;
  for (const auto& c : table.cells) {
    if (c.exposure <= 0.0) continue;
    e.max_abs = std::max(e.max_abs, std::abs(c.mean_bias));
    e.mean_abs += c.exposure * std::abs(c.mean_bias);
    total += c.exposure;
  }
  if (total > 0.0) e.mean_abs /= total;
  return e;
}

double global_balance_gap(std::span<const double> claims, std::span<const double> exposure,
                          std::span<const double> premium) {
  check_lengths(claims.size(), exposure.size(), premium.size());
  double expected = 0.0;
  for (std::size_t i = 0; i < premium.size(); ++i) expected += exposure[i] * premium[i];
  const double observed = std::accumulate(claims.begin(), claims.end(), 0.0);
  if (!(observed > 0.0)) throw DomainError("balance gap undefined: no claims");
  return expected / observed - 1.0;
}

DiagnosticsReport diagnose(const Portfolio& portfolio, std::span<const double> premium,
                           const Grouping& grouping, std::size_t bins) {
  DiagnosticsReport r;
  r.deviance = poisson_deviance(portfolio.claims(), portfolio.exposure(), premium);
  r.gini = gini_coefficient(premium, portfolio.claims(), portfolio.exposure());
  const auto scheme = quantile_bins(premium, portfolio.exposure(), bins);
  r.bias_table = residual_bias_table(portfolio, premium, scheme, grouping);
  r.multical = multical_error(r.bias_table);
  r.global_balance_gap = global_balance_gap(portfolio.claims(), portfolio.exposure(), premium);
  return r;
}

std::pair<double, double> weighted_mean_variance(std::span<const double> values,
                                                 std::span<const double> weights) {
  if (values.size() != weights.size() || values.empty()) {
    throw DomainError("weighted moments need equal-length non-empty inputs");
  }
  double sw = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sw += weights[i];
    swx += weights[i] * values[i];
  }
  const double mean = swx / sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ss += weights[i] * (values[i] - mean) * (values[i] - mean);
  }
  return {mean, ss / sw};
}

ConvexOrderReport convex_order_check(std::span<const double> a, std::span<const double> weight_a,
                                     std::span<const double> b, std::span<const double> weight_b,
                                     std::size_t grid_size, double tolerance) {
  if (a.empty() || b.empty()) throw DomainError("convex order check needs non-empty samples");
  if (grid_size < 2) throw ConfigError("convex order grid needs at least 2 points");
  ConvexOrderReport r;
  std::tie(r.mean_a, r.variance_a) = weighted_mean_variance(a, weight_a);
  std::tie(r.mean_b, r.variance_b) = weighted_mean_variance(b, weight_b);
  r.means_match = std::abs(r.mean_a - r.mean_b) <= tolerance;

  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*amin, *bmin);
  const double hi = std::max(*amax, *bmax);

  auto stop_loss = [](std::span<const double> v, std::span<const double> w, double t) {
    double sw = 0.0, s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      sw += w[i];
      if (v[i] > t) s += w[i] * (v[i] - t);
    }
    return s / sw;
  };
  for (std::size_t j = 0; j < grid_size; ++j) {
    const double t = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(grid_size - 1);
    r.grid.push_back(t);
    r.stop_loss_a.push_back(stop_loss(a, weight_a, t));
    r.stop_loss_b.push_back(stop_loss(b, weight_b, t));
    if (r.stop_loss_a.back() > r.stop_loss_b.back() + tolerance) r.violations.push_back(j);
  }
  return r;
}

}  // namespace multical
