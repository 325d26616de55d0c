#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "multical/isotonic.hpp"
#include "multical/portfolio.hpp"

namespace multical {

// Group membership used by the categorical procedures. Codes index `levels`.
struct Grouping {
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t level_count() const { return levels.size(); }
};

// Categorical S of the portfolio, or a single pooled level when S is absent.
Grouping grouping_of(const Portfolio& portfolio);
// Every record in one level named "all".
Grouping pooled_grouping(std::size_t n);

// Partition of the premium axis into right-closed intervals
// (-inf, e_1], (e_1, e_2], ..., (e_{K-1}, +inf). `lo`/`hi` record the range
// of the premiums the scheme was built from.
struct BinScheme {
  std::vector<double> edges;
  double lo = 0.0;
  double hi = 0.0;

  std::size_t bin_count() const { return edges.size() + 1; }
  std::size_t bin_of(double premium) const;
};

// Edges at exposure-weighted quantiles k/K, k = 1..K-1: the smallest premium
// whose cumulative exposure share reaches k/K. Duplicate edges and edges at
// the maximum are dropped, so no bin is empty and the effective K may shrink.
BinScheme quantile_bins(std::span<const double> premium, std::span<const double> exposure,
                        std::size_t bins);

// Per-(bin, level) residual statistics, row-major with index k * L + l.
// Empty cells have zero exposure and NaN cell bias.
struct CellBiasTable {
  std::size_t bins = 0;
  std::size_t levels = 0;
  std::vector<double> cell_bias;
  std::vector<double> cell_exposure;
  std::vector<double> cell_premium;  // exposure-weighted mean premium
  std::vector<double> pooled_bias;
  std::vector<double> bin_exposure;
  // Filled by shrink().
  std::vector<double> shrunk_bias;
  std::vector<double> credibility;

  std::size_t index(std::size_t k, std::size_t l) const { return k * levels + l; }
  bool empty_cell(std::size_t k, std::size_t l) const { return cell_exposure[index(k, l)] == 0.0; }
};

CellBiasTable cell_biases(const Portfolio& portfolio, std::span<const double> premium,
                          const BinScheme& bins, const Grouping& grouping);

// Credibility shrinkage of every cell bias toward its pooled bin bias with
// z = w / (w + c). Empty cells take the pooled value.
CellBiasTable shrink(CellBiasTable table, double credibility);

// ---------------------------------------------------------------------------
// Isotonic balance / multibalance correction.

struct BalanceResult {
  std::vector<double> premium;
  StepFunction function;
};

// Replaces each premium by the isotonic regression of Y on the premium.
// Block values below `floor` are raised to it and the remaining blocks are
// rescaled so the exposure-weighted total still equals the claim total.
BalanceResult balance_correct(const Portfolio& portfolio, std::span<const double> premium,
                              double floor = 1e-6);

struct MultibalanceOptions {
  std::size_t min_group_size = 30;
  double floor = 1e-6;
};

struct MultibalanceModel {
  std::vector<std::string> levels;
  std::vector<StepFunction> functions;
  // Used for levels unseen at fit time.
  StepFunction pooled;
};

struct MultibalanceResult {
  std::vector<double> premium;
  MultibalanceModel model;
};

// Group-wise isotonic balance correction. Every level needs at least
// `min_group_size` records; smaller groups belong to the iterative procedure.
MultibalanceResult multibalance_correct(const Portfolio& portfolio,
                                        std::span<const double> premium,
                                        const Grouping& grouping,
                                        const MultibalanceOptions& options = {});

struct ApplyStats {
  std::size_t unknown_levels = 0;
};

std::vector<double> apply_multibalance(const MultibalanceModel& model,
                                       std::span<const double> premium,
                                       std::span<const std::string> labels,
                                       ApplyStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Iterative bias correction with credibility shrinkage.

struct CalibrationConfig {
  std::size_t bins = 10;
  double eta = 0.2;
  double credibility = 100.0;
  double tolerance = 0.01;
  std::size_t max_iterations = 500;
  double premium_floor = 1e-6;
  // Bins built once from the starting premium and a single full-step update,
  // i.e. the discretized multibalance correction.
  bool fixed_bins = false;

  void validate() const;
};

// One applied update: bins of the premium at that iteration and the additive
// correction eta * b~ per (bin, level), plus eta * pooled bias per bin.
struct IterationStep {
  BinScheme bins;
  std::vector<double> correction;
  std::vector<double> pooled_correction;
};

struct IterativeModel {
  std::vector<std::string> levels;
  std::vector<IterationStep> steps;
  CalibrationConfig config;
  bool converged = false;
  // Stopping criterion max |eta b~| / mean premium, one entry per evaluated
  // iteration (the last entry is the one that met the tolerance).
  std::vector<double> trace;
};

struct IterativeResult {
  std::vector<double> premium;
  IterativeModel model;
};

IterativeResult iterate_multical_categorical(const Portfolio& portfolio,
                                             std::span<const double> premium0,
                                             const Grouping& grouping,
                                             const CalibrationConfig& config);

// Replays the stored updates. Labels unknown to the model take the pooled
// bin correction.
std::vector<double> apply_iterative(const IterativeModel& model,
                                    std::span<const double> premium,
                                    std::span<const std::string> labels,
                                    ApplyStats* stats = nullptr);

struct CredibilitySearch {
  double best = 0.0;
  std::vector<double> grid;
  std::vector<double> validation_deviance;
  std::vector<bool> converged;
};

// Picks c on a log grid by validation Poisson deviance, preferring candidates
// whose training fit converged.
CredibilitySearch select_credibility(const Portfolio& train, std::span<const double> train_premium,
                                     const Grouping& train_grouping, const Portfolio& validation,
                                     std::span<const double> validation_premium,
                                     std::span<const std::string> validation_labels,
                                     CalibrationConfig config,
                                     std::vector<double> grid = {1.0, 10.0, 100.0, 1000.0, 10000.0});

// Labels of `grouping` per record.
std::vector<std::string> labels_of(const Grouping& grouping);

}  // namespace multical
