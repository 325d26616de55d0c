#include "multical/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "multical/error.hpp"
#include "multical/metrics.hpp"

namespace multical {

Grouping grouping_of(const Portfolio& portfolio) {
  const auto& s = portfolio.sensitive();
  if (s.kind != SensitiveKind::categorical) return pooled_grouping(portfolio.size());
  return Grouping{s.codes, s.levels};
}

Grouping pooled_grouping(std::size_t n) {
  return Grouping{std::vector<int>(n, 0), {"all"}};
}

std::vector<std::string> labels_of(const Grouping& grouping) {
  std::vector<std::string> out;
  out.reserve(grouping.codes.size());
  for (int c : grouping.codes) out.push_back(grouping.levels[static_cast<std::size_t>(c)]);
  return out;
}

std::size_t BinScheme::bin_of(double premium) const {
  return static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), premium) -
                                  edges.begin());
}

BinScheme quantile_bins(std::span<const double> premium, std::span<const double> exposure,
                        std::size_t bins) {
  if (bins < 1) throw ConfigError("number of bins must be at least 1");
  if (premium.size() != exposure.size()) throw ValidationError("premium/exposure length mismatch");
  if (premium.empty()) throw DomainError("quantile bins of an empty sample");

  std::vector<std::size_t> order(premium.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return premium[a] < premium[b]; });

  BinScheme scheme;
  scheme.lo = premium[order.front()];
  scheme.hi = premium[order.back()];
  const double total = std::accumulate(exposure.begin(), exposure.end(), 0.0);
  const auto K = static_cast<double>(bins);

  double cumulative = 0.0;
  std::size_t next = 1;
  for (std::size_t j = 0; j < order.size() && next < bins; ++j) {
    cumulative += exposure[order[j]];
    // Only cut between distinct premiums.
    if (j + 1 < order.size() && premium[order[j + 1]] == premium[order[j]]) continue;
    while (next < bins && cumulative * K >= static_cast<double>(next) * total) {
      const double edge = premium[order[j]];
      if ((scheme.edges.empty() || edge > scheme.edges.back()) && edge < scheme.hi) {
        scheme.edges.push_back(edge);
      }
      ++next;
    }
  }
  if (scheme.edges.size() + 1 < bins) {
    spdlog::debug("quantile_bins: {} bins requested, {} effective", bins, scheme.edges.size() + 1);
  }
  return scheme;
}

CellBiasTable cell_biases(const Portfolio& portfolio, std::span<const double> premium,
                          const BinScheme& bins, const Grouping& grouping) {
  const std::size_t n = portfolio.size();
  if (premium.size() != n || grouping.codes.size() != n) {
    throw ValidationError("cell_biases: premium/grouping not aligned with portfolio");
  }
  CellBiasTable t;
  t.bins = bins.bin_count();
  t.levels = grouping.level_count();
  const std::size_t cells = t.bins * t.levels;
  std::vector<double> residual_sum(cells, 0.0);
  std::vector<double> premium_sum(cells, 0.0);
  t.cell_exposure.assign(cells, 0.0);

  const auto claims = portfolio.claims();
  const auto exposure = portfolio.exposure();
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = t.index(bins.bin_of(premium[i]), static_cast<std::size_t>(grouping.codes[i]));
    const double w = exposure[i];
    // w * (Y - pi) with Y = N / w.
    residual_sum[idx] += w * (claims[i] / w - premium[i]);
    premium_sum[idx] += w * premium[i];
    t.cell_exposure[idx] += w;
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  t.cell_bias.assign(cells, nan);
  t.cell_premium.assign(cells, nan);
  t.pooled_bias.assign(t.bins, nan);
  t.bin_exposure.assign(t.bins, 0.0);
  for (std::size_t k = 0; k < t.bins; ++k) {
    double bin_residual = 0.0;
    for (std::size_t l = 0; l < t.levels; ++l) {
      const auto idx = t.index(k, l);
      t.bin_exposure[k] += t.cell_exposure[idx];
      bin_residual += residual_sum[idx];
      if (t.cell_exposure[idx] > 0.0) {
        t.cell_bias[idx] = residual_sum[idx] / t.cell_exposure[idx];
        t.cell_premium[idx] = premium_sum[idx] / t.cell_exposure[idx];
      }
    }
    if (t.bin_exposure[k] > 0.0) t.pooled_bias[k] = bin_residual / t.bin_exposure[k];
  }
  return t;
}

CellBiasTable shrink(CellBiasTable table, double credibility) {
  if (!(credibility > 0.0)) throw ConfigError("credibility parameter c must be positive");
  const std::size_t cells = table.bins * table.levels;
  table.shrunk_bias.assign(cells, 0.0);
  table.credibility.assign(cells, 0.0);
  for (std::size_t k = 0; k < table.bins; ++k) {
    const double pooled = table.bin_exposure[k] > 0.0 ? table.pooled_bias[k] : 0.0;
    for (std::size_t l = 0; l < table.levels; ++l) {
      const auto idx = table.index(k, l);
      const double w = table.cell_exposure[idx];
      if (w > 0.0) {
        const double z = w / (w + credibility);
        table.credibility[idx] = z;
        table.shrunk_bias[idx] = z * table.cell_bias[idx] + (1.0 - z) * pooled;
      } else {
        table.shrunk_bias[idx] = pooled;
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

namespace {

// Raises block values below `floor` to it and rescales the other blocks so
// that sum_b W_b v_b is unchanged.
void floor_preserving_balance(StepFunction& f, std::span<const double> block_weight,
                              double floor) {
  for (int pass = 0; pass < 8; ++pass) {
    double excess = 0.0;
    double free_mass = 0.0;
    for (std::size_t b = 0; b < f.values.size(); ++b) {
      if (f.values[b] < floor) {
        excess += block_weight[b] * (floor - f.values[b]);
        f.values[b] = floor;
      } else if (f.values[b] > floor) {
        free_mass += block_weight[b] * f.values[b];
      }
    }
    if (excess == 0.0) return;
    if (free_mass <= excess) return;  // nothing left to rebalance against
    const double scale = (free_mass - excess) / free_mass;
    bool ok = true;
    for (auto& v : f.values) {
      if (v > floor) {
        v *= scale;
        ok = ok && v >= floor;
      }
    }
    if (ok) return;
  }
}

StepFunction floored_isotonic(std::span<const double> premium, std::span<const double> y,
                              std::span<const double> w, double floor) {
  auto f = weighted_isotonic_fit(premium, y, w);
  std::vector<double> block_weight(f.block_count(), 0.0);
  for (std::size_t i = 0; i < premium.size(); ++i) block_weight[block_index(f, premium[i])] += w[i];
  floor_preserving_balance(f, block_weight, floor);
  return f;
}

void check_premium(std::span<const double> premium, std::size_t n) {
  if (premium.size() != n) throw ValidationError("premium vector not aligned with portfolio");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(premium[i] > 0.0) || !std::isfinite(premium[i])) {
      throw ValidationError(i, fmt::format("premium must be positive, got {}", premium[i]));
    }
  }
}

}  // namespace

BalanceResult balance_correct(const Portfolio& portfolio, std::span<const double> premium,
                              double floor) {
  check_premium(premium, portfolio.size());
  const auto y = portfolio.frequency();
  BalanceResult r;
  r.function = floored_isotonic(premium, y, portfolio.exposure(), floor);
  r.premium = evaluate(r.function, premium);
  return r;
}

MultibalanceResult multibalance_correct(const Portfolio& portfolio,
                                        std::span<const double> premium,
                                        const Grouping& grouping,
                                        const MultibalanceOptions& options) {
  const std::size_t n = portfolio.size();
  check_premium(premium, n);
  if (grouping.codes.size() != n) throw ValidationError("grouping not aligned with portfolio");

  const std::size_t L = grouping.level_count();
  std::vector<std::vector<std::size_t>> members(L);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(grouping.codes[i])].push_back(i);
  for (std::size_t l = 0; l < L; ++l) {
    if (members[l].size() < options.min_group_size) {
      throw DomainError(fmt::format(
          "level '{}' has {} records, fewer than the minimum {} for group-wise isotonic "
          "correction; use the iterative procedure (--mode multi-iter) instead",
          grouping.levels[l], members[l].size(), options.min_group_size));
    }
  }

  const auto y = portfolio.frequency();
  const auto w = portfolio.exposure();
  MultibalanceResult r;
  r.model.levels = grouping.levels;
  r.model.pooled = floored_isotonic(premium, y, w, options.floor);
  r.premium.resize(n);
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> p, yy, ww;
    for (auto i : members[l]) {
      p.push_back(premium[i]);
      yy.push_back(y[i]);
      ww.push_back(w[i]);
    }
    r.model.functions.push_back(floored_isotonic(p, yy, ww, options.floor));
    for (auto i : members[l]) r.premium[i] = step_eval(r.model.functions.back(), premium[i]);
  }
  return r;
}

std::vector<double> apply_multibalance(const MultibalanceModel& model,
                                       std::span<const double> premium,
                                       std::span<const std::string> labels, ApplyStats* stats) {
  if (premium.size() != labels.size()) throw ValidationError("premium/labels length mismatch");
  std::vector<double> out(premium.size());
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < premium.size(); ++i) {
    auto it = std::find(model.levels.begin(), model.levels.end(), labels[i]);
    if (it == model.levels.end()) {
      ++unknown;
      out[i] = step_eval(model.pooled, premium[i]);
    } else {
      out[i] = step_eval(model.functions[static_cast<std::size_t>(it - model.levels.begin())],
                         premium[i]);
    }
  }
  if (unknown > 0) spdlog::warn("{} records with unknown sensitive level use the pooled fit", unknown);
  if (stats) stats->unknown_levels = unknown;
  return out;
}

// ---------------------------------------------------------------------------

void CalibrationConfig::validate() const {
  if (bins < 1) throw ConfigError("bins must be at least 1");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  if (!(credibility > 0.0)) throw ConfigError("credibility c must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(premium_floor > 0.0)) throw ConfigError("premium floor must be positive");
}

namespace {

double step_correction(const IterationStep& step, std::size_t levels, double premium,
                       std::optional<int> code) {
  const auto k = step.bins.bin_of(premium);
  if (!code) return step.pooled_correction[k];
  return step.correction[k * levels + static_cast<std::size_t>(*code)];
}

double apply_step(const IterationStep& step, std::size_t levels, double premium,
                  std::optional<int> code, double floor) {
  return std::max(premium + step_correction(step, levels, premium, code), floor);
}

}  // namespace

IterativeResult iterate_multical_categorical(const Portfolio& portfolio,
                                             std::span<const double> premium0,
                                             const Grouping& grouping,
                                             const CalibrationConfig& config) {
  config.validate();
  const std::size_t n = portfolio.size();
  if (n == 0) throw DomainError("training fold is empty");
  check_premium(premium0, n);
  if (grouping.codes.size() != n) throw ValidationError("grouping not aligned with portfolio");

  IterativeResult result;
  auto& model = result.model;
  model.levels = grouping.levels;
  model.config = config;
  const std::size_t L = grouping.level_count();
  const double eta = config.fixed_bins ? 1.0 : config.eta;
  const std::size_t max_iter = config.fixed_bins ? 1 : config.max_iterations;

  std::vector<double> premium(premium0.begin(), premium0.end());
  std::optional<BinScheme> fixed;
  if (config.fixed_bins) fixed = quantile_bins(premium, portfolio.exposure(), config.bins);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const BinScheme bins = fixed ? *fixed : quantile_bins(premium, portfolio.exposure(), config.bins);
    const auto table = shrink(cell_biases(portfolio, premium, bins, grouping), config.credibility);

    double criterion = 0.0;
    for (std::size_t idx = 0; idx < table.cell_exposure.size(); ++idx) {
      if (table.cell_exposure[idx] > 0.0) {
        criterion = std::max(criterion, std::abs(eta * table.shrunk_bias[idx]) / table.cell_premium[idx]);
      }
    }
    model.trace.push_back(criterion);
    if (!config.fixed_bins && criterion <= config.tolerance) {
      model.converged = true;
      break;
    }

    IterationStep step;
    step.bins = bins;
    step.correction.resize(table.shrunk_bias.size());
    for (std::size_t idx = 0; idx < table.shrunk_bias.size(); ++idx) {
      step.correction[idx] = eta * table.shrunk_bias[idx];
    }
    step.pooled_correction.resize(table.bins);
    for (std::size_t k = 0; k < table.bins; ++k) {
      step.pooled_correction[k] = table.bin_exposure[k] > 0.0 ? eta * table.pooled_bias[k] : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      premium[i] = apply_step(step, L, premium[i], grouping.codes[i], config.premium_floor);
    }
    model.steps.push_back(std::move(step));
  }
  if (config.fixed_bins) model.converged = true;
  if (!model.converged) {
    spdlog::warn("iterative calibration did not converge in {} iterations (criterion {:.3g} > {})",
                 config.max_iterations, model.trace.back(), config.tolerance);
  }
  result.premium = std::move(premium);
  return result;
}

std::vector<double> apply_iterative(const IterativeModel& model, std::span<const double> premium,
                                    std::span<const std::string> labels, ApplyStats* stats) {
  if (premium.size() != labels.size()) throw ValidationError("premium/labels length mismatch");
  const std::size_t L = model.levels.size();
  std::vector<std::optional<int>> codes(labels.size());
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(model.levels.begin(), model.levels.end(), labels[i]);
    if (it != model.levels.end()) {
      codes[i] = static_cast<int>(it - model.levels.begin());
    } else {
      ++unknown;
    }
  }
  if (unknown > 0) {
    spdlog::warn("{} records with unknown sensitive level use the pooled bin correction", unknown);
  }
  if (stats) stats->unknown_levels = unknown;

  std::vector<double> out(premium.begin(), premium.end());
  for (const auto& step : model.steps) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = apply_step(step, L, out[i], codes[i], model.config.premium_floor);
    }
  }
  return out;
}

CredibilitySearch select_credibility(const Portfolio& train, std::span<const double> train_premium,
                                     const Grouping& train_grouping, const Portfolio& validation,
                                     std::span<const double> validation_premium,
                                     std::span<const std::string> validation_labels,
                                     CalibrationConfig config, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("credibility grid is empty");
  CredibilitySearch search;
  search.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  for (double c : grid) {
    config.credibility = c;
    const auto fit = iterate_multical_categorical(train, train_premium, train_grouping, config);
    const auto applied = apply_iterative(fit.model, validation_premium, validation_labels);
    const double dev = poisson_deviance(validation.claims(), validation.exposure(), applied);
    search.validation_deviance.push_back(dev);
    search.converged.push_back(fit.model.converged);
  }
  // Converged candidates first; the whole grid only if none converged.
  const bool any = std::find(search.converged.begin(), search.converged.end(), true) != search.converged.end();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (any && !search.converged[j]) continue;
    if (search.validation_deviance[j] < best) {
      best = search.validation_deviance[j];
      search.best = grid[j];
    }
  }
  return search;
}

}  // namespace multical
