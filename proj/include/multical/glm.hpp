#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "multical/categorical.hpp"
#include "multical/portfolio.hpp"

namespace multical {

struct GlmConfig {
  // Exposure-weighted quantile bins for numeric features.
  std::size_t numeric_bins = 10;
  double ridge = 1e-8;
  double tolerance = 1e-10;
  std::size_t max_iterations = 100;

  void validate() const;
};

// One-hot encoding of one feature. Numeric features are binned first; their
// levels are the bin indices as text ("0", "1", ...). The reference level
// (most exposed at fit time) has no coefficient.
struct FeatureEncoding {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
  BinScheme bins;
  std::vector<std::string> levels;
  std::size_t reference = 0;
  // Coefficient index per level; -1 for the reference.
  std::vector<int> column;
};

struct GlmModel {
  double intercept = 0.0;
  std::vector<FeatureEncoding> features;
  // Non-reference levels in feature order; names are "feature=level".
  std::vector<double> coefficients;
  std::vector<std::string> column_names;
  double intercept_std_error = 0.0;
  std::vector<double> std_errors;
  GlmConfig config;
  std::size_t iterations = 0;
  bool converged = false;
  // Poisson log-likelihood (up to a constant) after each iteration.
  std::vector<double> loglik_trace;
};

// Poisson log-link regression of the claim counts with offset ln(exposure),
// by IRLS. The ridge term is added to every coefficient but the intercept.
GlmModel fit_baseline(const Portfolio& portfolio, const std::vector<std::string>& features,
                      const GlmConfig& config = {});

struct GlmPredictStats {
  std::size_t unseen_levels = 0;
};

// Frequency premiums exp(intercept + sum of level coefficients). Unseen
// categorical levels use the reference level and are counted.
std::vector<double> predict(const GlmModel& model, const Portfolio& portfolio,
                            GlmPredictStats* stats = nullptr);

}  // namespace multical
