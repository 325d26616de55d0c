#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multical/categorical.hpp"
#include "multical/portfolio.hpp"
#include "multical/smoothing.hpp"

namespace multical {

enum class ContinuousMode { local_bc, local_mbc, multi_iter_cont };

std::string to_string(ContinuousMode mode);
ContinuousMode parse_continuous_mode(const std::string& text);

struct ContinuousConfig {
  double alpha = 0.5;
  // Unset: linear.
  std::optional<Degree> degree;
  // 0 selects max(50, ceil(0.01 n)), capped at n.
  std::size_t knn_k = 0;
  std::size_t grid_p = 64;
  std::size_t grid_s = 64;
  std::size_t grid_1d = 256;
  // Cells per axis for pre-aggregating records in 2-D fits; 0 = exact.
  std::size_t bins_2d = 128;
  double eta = 0.2;
  double credibility = 100.0;
  double tolerance = 0.01;
  std::size_t max_iterations = 500;
  double premium_floor = 1e-6;
  // Stopping grid: quantile bins of the starting premium x quantile bins of S.
  std::size_t stop_bins_p = 10;
  std::size_t stop_bins_s = 10;
  // Quantile bins of the premium on which the centred correction must average
  // to zero exactly; 0 keeps the plain local fit.
  std::size_t centering_bins = 10;

  void validate() const;
  SmoothConfig smooth(ContinuousMode mode) const;
  std::size_t resolved_k(std::size_t n) const;
};

// One applied update: marginal bias b(p), joint bias b(p, s) and the
// centering curve E[delta | p]. The correction at (p, s) is
// b(p) + z(p, s) (b(p, s) - b(p)) - E[delta | p].
struct ContinuousStep {
  LocalSurface marginal;
  LocalSurface joint;
  LocalSurface centering;
};

struct ContinuousModel {
  ContinuousMode mode = ContinuousMode::local_bc;
  ContinuousConfig config;
  // local-bc and local-mbc.
  std::optional<LocalSurface> balance;
  // local-mbc.
  std::optional<LocalSurface> joint;
  std::optional<LocalSurface> centering;
  // multi-iter-cont: z(p, s) over the starting premium, fixed for all steps.
  std::optional<LocalSurface> credibility;
  std::vector<ContinuousStep> steps;
  BinScheme stop_bins_p;
  BinScheme stop_bins_s;
  bool converged = true;
  // Stopping criterion per evaluated iteration.
  std::vector<double> trace;
  // Training deviance before each evaluated iteration.
  std::vector<double> deviance_trace;
  // Hash of the z surface as used by each evaluated iteration.
  std::vector<std::uint64_t> z_checksums;
  // max |local fit of the centred correction| at the grid nodes, per step.
  std::vector<double> centering_residual;
};

struct ContinuousResult {
  std::vector<double> premium;
  ContinuousModel model;
};

// pi_bc(p) = m0(p), the 1-D local mean of Y on the premium.
ContinuousResult local_balance_correct(const Portfolio& portfolio, std::span<const double> premium,
                                       const ContinuousConfig& config);

// m0(p) + delta(p, s) - E[delta | p] with delta = m(p, s) - m0(p).
ContinuousResult mbc_bivariate_centered(const Portfolio& portfolio,
                                        std::span<const double> premium,
                                        std::span<const double> s, const ContinuousConfig& config);

ContinuousResult iterate_multical_continuous(const Portfolio& portfolio,
                                             std::span<const double> premium0,
                                             std::span<const double> s,
                                             const ContinuousConfig& config);

struct ContinuousApplyStats {
  // Records outside the training range of the surfaces (clamped).
  std::size_t clamped = 0;
};

std::vector<double> apply_continuous(const ContinuousModel& model, std::span<const double> premium,
                                     std::span<const double> s,
                                     ContinuousApplyStats* stats = nullptr);

// Centering curve c = E[delta | x] on the grid of x: the 1-D local fit of
// delta, shifted by the minimum-norm node change that zeroes the weighted
// mean of delta - c(x) in each of `consistency_bins` quantile bins of x.
// `residual` is the largest 1-D fit of delta - c(x) at a node before the
// shift, `adjustment` the largest node shift.
struct CenteringFit {
  LocalSurface surface;
  double residual = 0.0;
  double adjustment = 0.0;
};

CenteringFit centering_surface(std::span<const double> x, std::span<const double> delta,
                               std::span<const double> w, const SmoothConfig& cfg,
                               std::size_t grid_size, std::size_t consistency_bins = 0);

// FNV-1a over the grid and values of a surface.
std::uint64_t surface_checksum(const LocalSurface& surface);

struct ContinuousCredibilitySearch {
  double best = 0.0;
  std::vector<double> grid;
  std::vector<double> validation_deviance;
  std::vector<bool> converged;
};

ContinuousCredibilitySearch select_credibility_continuous(
    const Portfolio& train, std::span<const double> train_premium,
    std::span<const double> train_s, const Portfolio& validation,
    std::span<const double> validation_premium, std::span<const double> validation_s,
    ContinuousConfig config, std::vector<double> grid = {1.0, 10.0, 100.0, 1000.0, 10000.0});

}  // namespace multical
