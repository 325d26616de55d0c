#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multical/categorical.hpp"
#include "multical/portfolio.hpp"

namespace multical {

// D = 2 sum_i [N_i ln(N_i / (w_i pi_i)) - N_i + w_i pi_i], with 0 ln 0 = 0.
double poisson_deviance(std::span<const double> claims, std::span<const double> exposure,
                        std::span<const double> premium);

// Concentration-curve Gini: records sorted by ascending premium (ties pooled
// into one segment), cumulative claim share against cumulative exposure
// share, trapezoidal area A, Gini = 1 - 2A. Throws DomainError when there are
// no claims.
double gini_coefficient(std::span<const double> premium, std::span<const double> claims,
                        std::span<const double> exposure);

enum class BregmanFamily { poisson, gaussian };

// L(y, m) = l(y) - l(m) - l'(m)(y - m), with l(y) = y ln y - y (Poisson) or
// l(y) = y^2 (Gaussian).
double bregman_loss(double y, double m, BregmanFamily family);

struct BiasCell {
  std::size_t bin = 0;
  std::string group;
  double exposure = 0.0;
  double mean_bias = 0.0;
  double mean_premium = 0.0;
  // Poisson standard error sqrt(sum w pi) / sum w of the mean residual.
  double std_error = 0.0;
};

struct BiasTable {
  BinScheme bins;
  std::vector<std::string> groups;
  // Row-major (bin, group); cells with zero exposure are kept with NaN-free
  // zero statistics.
  std::vector<BiasCell> cells;
  std::vector<BiasCell> pooled;
  // Per bin (min, max) mean bias over groups with exposure.
  std::vector<std::pair<double, double>> envelope;

  const BiasCell& cell(std::size_t k, std::size_t g) const { return cells[k * groups.size() + g]; }
};

BiasTable residual_bias_table(const Portfolio& portfolio, std::span<const double> premium,
                              const BinScheme& bins, const Grouping& grouping);

// Equal-exposure quantile bins of a continuous variable, as a grouping with
// labels "q1".."qK".
Grouping quantile_grouping(std::span<const double> values, std::span<const double> exposure,
                           std::size_t bins);

// CSV with columns bin_index,bin_lo,bin_hi,group,exposure,mean_bias followed
// by pooled rows (group "pooled") and envelope rows ("envelope_min"/"_max").
std::string bias_table_csv(const BiasTable& table);

struct MulticalError {
  double max_abs = 0.0;
  double mean_abs = 0.0;  // exposure-weighted
};

MulticalError multical_error(const BiasTable& table);

// sum w pi / sum N - 1.
double global_balance_gap(std::span<const double> claims, std::span<const double> exposure,
                          std::span<const double> premium);

struct DiagnosticsReport {
  double deviance = 0.0;
  double gini = 0.0;
  BiasTable bias_table;
  MulticalError multical;
  double global_balance_gap = 0.0;
};

DiagnosticsReport diagnose(const Portfolio& portfolio, std::span<const double> premium,
                           const Grouping& grouping, std::size_t bins = 10);

struct ConvexOrderReport {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double variance_a = 0.0;
  double variance_b = 0.0;
  std::vector<double> grid;
  std::vector<double> stop_loss_a;
  std::vector<double> stop_loss_b;
  // Grid indices where E(A - t)+ exceeds E(B - t)+ by more than the tolerance.
  std::vector<std::size_t> violations;
  bool means_match = false;

  bool holds() const { return means_match && violations.empty(); }
};

// Empirical test of A <=_cx B with exposure weights: equal means, and
// stop-loss transforms ordered on `grid_size` points spanning the pooled range.
ConvexOrderReport convex_order_check(std::span<const double> a, std::span<const double> weight_a,
                                     std::span<const double> b, std::span<const double> weight_b,
                                     std::size_t grid_size = 100, double tolerance = 1e-9);

// Exposure-weighted mean and variance.
std::pair<double, double> weighted_mean_variance(std::span<const double> values,
                                                 std::span<const double> weights);

}  // namespace multical
