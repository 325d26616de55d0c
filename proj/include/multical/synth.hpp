#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multical/portfolio.hpp"

namespace multical {

// Baseline premium pi = scale * mu~^power, where mu~ is the true mean with
// the S term (drop_s) and any listed feature terms removed.
struct Distortion {
  double scale = 1.0;
  double power = 1.0;
  bool drop_s = false;
  std::vector<std::string> dropped_features;
};

// Features: numeric x1..xK ~ N(0, 1) and categorical c1..cM with uniformly
// drawn levels "a", "b", ... S comes from a latent N(0, 1) variable with
// correlation `s_correlation` to x1; categorical S cuts it into
// `group_levels` equally likely levels g1..gL. The true mean is
// mu = exp(intercept + sum effects + beta_s * s_term), where s_term is the
// latent value (continuous S) or the level index rescaled to [-1, 1].
struct SynthConfig {
  std::size_t n = 10000;
  std::uint64_t seed = 1;
  SensitiveKind group_kind = SensitiveKind::categorical;
  std::size_t group_levels = 3;
  double intercept = -2.3;
  std::vector<double> numeric_effects{0.3, -0.2};
  // One vector of level effects per categorical feature.
  std::vector<std::vector<double>> categorical_effects{{0.0, 0.25, -0.25, 0.5}};
  double beta_s = 0.0;
  double s_correlation = 0.0;
  double exposure_min = 0.05;
  double exposure_max = 1.0;

  void validate() const;
};

struct SynthData {
  Portfolio portfolio;
  std::vector<double> true_mu;
  // Linear-predictor contribution of every feature term, keyed by feature
  // name ("S" for the sensitive term).
  std::vector<std::pair<std::string, std::vector<double>>> terms;
};

SynthData generate(const SynthConfig& config);

std::vector<double> distorted_baseline(const SynthData& data, const Distortion& distortion);
// Power distortion of a plain mean vector (no terms to drop).
std::vector<double> distorted_baseline(std::span<const double> true_mu, double scale, double power);

// Small counter-based generator: each record gets its own stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

 private:
  std::uint64_t state_;
};

SplitMix64 record_stream(std::uint64_t seed, std::uint64_t record);

}  // namespace multical
