#include "multical/continuous.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "multical/error.hpp"
#include "multical/metrics.hpp"

namespace multical {

namespace {

void check_premium(std::span<const double> premium, std::size_t n) {
  if (premium.size() != n) throw ValidationError("premium vector not aligned with portfolio");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(premium[i] > 0.0) || !std::isfinite(premium[i])) {
      throw ValidationError(i, "premiums must be positive and finite");
    }
  }
}

void check_sensitive(std::span<const double> s, std::size_t n) {
  if (s.size() != n) throw ValidationError("sensitive values not aligned with portfolio");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s[i])) throw ValidationError(i, "sensitive value must be finite");
  }
}

std::vector<double> frequencies(const Portfolio& portfolio) {
  std::vector<double> y(portfolio.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = portfolio.claims()[i] / portfolio.exposure()[i];
  return y;
}

// Interpolation of a 1-D grid: value(x) = (1 - t) v[i] + t v[i + 1].
struct Bracket {
  std::size_t i = 0;
  double t = 0.0;
};

Bracket bracket(const std::vector<double>& grid, double x) {
  if (grid.size() == 1) return {};
  x = std::clamp(x, grid.front(), grid.back());
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t i = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
  i = std::min(i, grid.size() - 2);
  return {i, (x - grid[i]) / (grid[i + 1] - grid[i])};
}

double step_correction(const ContinuousStep& step, const LocalSurface& z, double p, double s) {
  const double bp = step.marginal(p);
  const double delta = z(p, s) * (step.joint(p, s) - bp);
  return bp + delta - step.centering(p);
}

double step_update(const ContinuousStep& step, const LocalSurface& z, double eta, double floor,
                   double p, double s) {
  return std::max(p + eta * step_correction(step, z, p, s), floor);
}

double mbc_value(const ContinuousModel& m, double p, double s) {
  const double base = (*m.balance)(p);
  return base + ((*m.joint)(p, s) - base) - (*m.centering)(p);
}

}  // namespace

std::string to_string(ContinuousMode mode) {
  switch (mode) {
    case ContinuousMode::local_bc:
      return "local-bc";
    case ContinuousMode::local_mbc:
      return "local-mbc";
    case ContinuousMode::multi_iter_cont:
      return "multi-iter-cont";
  }
  return "local-bc";
}

ContinuousMode parse_continuous_mode(const std::string& text) {
  if (text == "local-bc") return ContinuousMode::local_bc;
  if (text == "local-mbc") return ContinuousMode::local_mbc;
  if (text == "multi-iter-cont") return ContinuousMode::multi_iter_cont;
  throw ConfigError(fmt::format("unknown continuous mode '{}'", text));
}

void ContinuousConfig::validate() const {
  SmoothConfig{alpha}.validate();
  if (grid_p < 2 || grid_s < 2 || grid_1d < 2) throw ConfigError("surface grids need >= 2 nodes");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  if (!(credibility > 0.0)) throw ConfigError("credibility c must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(premium_floor > 0.0)) throw ConfigError("premium floor must be positive");
  if (stop_bins_p < 1 || stop_bins_s < 1) throw ConfigError("stopping grid needs >= 1 bin per axis");
}

SmoothConfig ContinuousConfig::smooth(ContinuousMode) const {
  SmoothConfig cfg;
  cfg.alpha = alpha;
  cfg.degree = degree.value_or(Degree::linear);
  cfg.bins_2d = bins_2d;
  return cfg;
}

std::size_t ContinuousConfig::resolved_k(std::size_t n) const {
  if (knn_k > 0) {
    if (knn_k > n) throw ConfigError(fmt::format("knn k={} exceeds {} records", knn_k, n));
    return knn_k;
  }
  const auto k = std::max<std::size_t>(50, static_cast<std::size_t>(std::ceil(0.01 * n)));
  return std::min(k, n);
}

std::uint64_t surface_checksum(const LocalSurface& surface) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const std::vector<double>& v) {
    for (double x : v) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &x, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  };
  mix(surface.grid_p);
  mix(surface.grid_s);
  mix(surface.values);
  return h;
}

CenteringFit centering_surface(std::span<const double> x, std::span<const double> delta,
                               std::span<const double> w, const SmoothConfig& cfg,
                               std::size_t grid_size, std::size_t consistency_bins) {
  if (x.size() != delta.size() || x.size() != w.size()) {
    throw ValidationError("centering inputs differ in length");
  }
  CenteringFit fit;
  fit.surface.grid_p = grid_nodes(x, w, grid_size);
  const auto& nodes = fit.surface.grid_p;
  const std::size_t G = nodes.size();

  std::vector<Bracket> brackets(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) brackets[i] = bracket(nodes, x[i]);

  // A delta (plain fit at the nodes) and M = A B, where B interpolates node
  // values to the records.
  Eigen::VectorXd smooth_delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(G));
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(G));
  for_each_kernel_row_1d(x, w, nodes, cfg, [&](std::size_t g, const KernelWeights& row) {
    const auto gg = static_cast<Eigen::Index>(g);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.index.size(); ++k) {
      const std::size_t i = row.index[k];
      const double a = row.weight[k];
      acc += a * delta[i];
      const auto& b = brackets[i];
      const auto bi = static_cast<Eigen::Index>(b.i);
      if (G == 1) {
        M(gg, 0) += a;
      } else {
        M(gg, bi) += a * (1.0 - b.t);
        M(gg, bi + 1) += a * b.t;
      }
    }
    smooth_delta[gg] = acc;
  });

  // c = A delta. The smooth of delta - c(x) at the nodes is A delta - M c,
  // which is not zero because the smoother is not a projection.
  Eigen::VectorXd c = smooth_delta;
  fit.residual = (smooth_delta - M * c).cwiseAbs().maxCoeff();

  // Smallest change to the node values that makes the exposure-weighted mean
  // of delta - c(x) vanish within each quantile bin of x.
  if (consistency_bins > 0 && G > 1) {
    const auto bins = quantile_bins(x, w, consistency_bins);
    const auto K = static_cast<Eigen::Index>(bins.bin_count());
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(G));
    Eigen::VectorXd target = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(bins.bin_of(x[i]));
      const auto& b = brackets[i];
      const auto bi = static_cast<Eigen::Index>(b.i);
      E(k, bi) += w[i] * (1.0 - b.t);
      E(k, bi + 1) += w[i] * b.t;
      target[k] += w[i] * delta[i];
      mass[k] += w[i];
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      if (mass[k] > 0.0) {
        E.row(k) /= mass[k];
        target[k] /= mass[k];
      }
    }
    const Eigen::VectorXd gap = target - E * c;
    const Eigen::VectorXd shift = E.completeOrthogonalDecomposition().solve(gap);
    c += shift;
    fit.adjustment = shift.cwiseAbs().maxCoeff();
  }
  fit.surface.values.assign(c.data(), c.data() + G);
  return fit;
}

ContinuousResult local_balance_correct(const Portfolio& portfolio, std::span<const double> premium,
                                       const ContinuousConfig& config) {
  config.validate();
  const std::size_t n = portfolio.size();
  if (n == 0) throw DomainError("training fold is empty");
  check_premium(premium, n);
  const auto y = frequencies(portfolio);

  ContinuousResult result;
  auto& model = result.model;
  model.mode = ContinuousMode::local_bc;
  model.config = config;
  model.balance = fit_surface_1d(premium, y, portfolio.exposure(),
                                 config.smooth(ContinuousMode::local_bc), config.grid_1d);
  result.premium = apply_continuous(model, premium, {});
  return result;
}

ContinuousResult mbc_bivariate_centered(const Portfolio& portfolio,
                                        std::span<const double> premium,
                                        std::span<const double> s, const ContinuousConfig& config) {
  config.validate();
  const std::size_t n = portfolio.size();
  if (n == 0) throw DomainError("training fold is empty");
  check_premium(premium, n);
  check_sensitive(s, n);
  const auto y = frequencies(portfolio);
  const auto w = portfolio.exposure();
  const auto cfg = config.smooth(ContinuousMode::local_mbc);

  ContinuousResult result;
  auto& model = result.model;
  model.mode = ContinuousMode::local_mbc;
  model.config = config;
  model.balance = fit_surface_1d(premium, y, w, cfg, config.grid_1d);
  model.joint = fit_surface_2d(premium, s, y, w, cfg, config.grid_p, config.grid_s);

  std::vector<double> delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    delta[i] = (*model.joint)(premium[i], s[i]) - (*model.balance)(premium[i]);
  }
  auto centred =
      centering_surface(premium, delta, w, cfg, config.grid_1d, config.centering_bins);
  model.centering = std::move(centred.surface);
  model.centering_residual.push_back(centred.residual);
  result.premium = apply_continuous(model, premium, s);
  return result;
}

ContinuousResult iterate_multical_continuous(const Portfolio& portfolio,
                                             std::span<const double> premium0,
                                             std::span<const double> s,
                                             const ContinuousConfig& config) {
  config.validate();
  const std::size_t n = portfolio.size();
  if (n == 0) throw DomainError("training fold is empty");
  check_premium(premium0, n);
  check_sensitive(s, n);
  const auto y = frequencies(portfolio);
  const auto w = portfolio.exposure();
  const auto cfg = config.smooth(ContinuousMode::multi_iter_cont);

  ContinuousResult result;
  auto& model = result.model;
  model.mode = ContinuousMode::multi_iter_cont;
  model.config = config;
  model.converged = false;

  // z(p, s) = w_loc / (w_loc + c) on a grid over (premium0, s), computed once.
  LocalSurface z;
  z.grid_p = grid_nodes(premium0, w, config.grid_p);
  z.grid_s = grid_nodes(s, w, config.grid_s);
  z.scale_p = standardization_scale(premium0, w);
  z.scale_s = standardization_scale(s, w);
  {
    std::vector<double> qp, qs;
    for (double a : z.grid_p) {
      for (double b : z.grid_s) {
        qp.push_back(a);
        qs.push_back(b);
      }
    }
    const auto local = knn_exposure_at(premium0, s, w, config.resolved_k(n), qp, qs, z.scale_p,
                                       z.scale_s);
    z.values.resize(local.size());
    for (std::size_t j = 0; j < local.size(); ++j) {
      z.values[j] = local[j] / (local[j] + config.credibility);
    }
  }
  model.credibility = z;
  const LocalSurface& zf = *model.credibility;

  model.stop_bins_p = quantile_bins(premium0, w, config.stop_bins_p);
  model.stop_bins_s = quantile_bins(s, w, config.stop_bins_s);
  const std::size_t KP = model.stop_bins_p.bin_count();
  const std::size_t KS = model.stop_bins_s.bin_count();
  std::vector<std::size_t> s_bin(n);
  for (std::size_t i = 0; i < n; ++i) s_bin[i] = model.stop_bins_s.bin_of(s[i]);

  std::vector<double> premium(premium0.begin(), premium0.end());
  std::vector<double> residual(n), delta(n), correction(n);
  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    model.z_checksums.push_back(surface_checksum(zf));
    model.deviance_trace.push_back(poisson_deviance(portfolio.claims(), w, premium));
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - premium[i];

    ContinuousStep step;
    step.marginal = fit_surface_1d(premium, residual, w, cfg, config.grid_1d);
    step.joint = fit_surface_2d(premium, s, residual, w, cfg, config.grid_p, config.grid_s);
    for (std::size_t i = 0; i < n; ++i) {
      delta[i] = zf(premium[i], s[i]) * (step.joint(premium[i], s[i]) - step.marginal(premium[i]));
    }
    auto centred =
      centering_surface(premium, delta, w, cfg, config.grid_1d, config.centering_bins);
    step.centering = std::move(centred.surface);

    // Stopping rule on the fixed grid.
    std::vector<double> cw(KP * KS, 0.0), cb(KP * KS, 0.0), cp(KP * KS, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      correction[i] = step_correction(step, zf, premium[i], s[i]);
      const std::size_t cell = model.stop_bins_p.bin_of(premium[i]) * KS + s_bin[i];
      cw[cell] += w[i];
      cb[cell] += w[i] * correction[i];
      cp[cell] += w[i] * premium[i];
    }
    double criterion = 0.0;
    for (std::size_t c = 0; c < cw.size(); ++c) {
      if (cw[c] > 0.0) criterion = std::max(criterion, std::abs(config.eta * cb[c] / cp[c]));
    }
    model.trace.push_back(criterion);
    if (criterion <= config.tolerance) {
      model.converged = true;
      break;
    }

    model.centering_residual.push_back(centred.residual);
    for (std::size_t i = 0; i < n; ++i) {
      premium[i] = step_update(step, zf, config.eta, config.premium_floor, premium[i], s[i]);
    }
    model.steps.push_back(std::move(step));
  }
  if (!model.converged) {
    spdlog::warn("continuous calibration did not converge in {} iterations (criterion {:.3g} > {})",
                 config.max_iterations, model.trace.back(), config.tolerance);
  }
  result.premium = std::move(premium);
  return result;
}

std::vector<double> apply_continuous(const ContinuousModel& model, std::span<const double> premium,
                                     std::span<const double> s, ContinuousApplyStats* stats) {
  const bool needs_s = model.mode != ContinuousMode::local_bc;
  if (needs_s && s.size() != premium.size()) {
    throw ValidationError("continuous model needs one sensitive value per premium");
  }
  const double floor = model.config.premium_floor;
  std::vector<double> out(premium.begin(), premium.end());

  const LocalSurface* range = nullptr;
  if (model.joint) range = &*model.joint;
  else if (model.credibility) range = &*model.credibility;
  else if (model.balance) range = &*model.balance;
  std::size_t clamped = 0;
  if (range) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (range->outside(out[i], needs_s ? s[i] : 0.0)) ++clamped;
    }
  }
  if (clamped > 0) spdlog::warn("{} records outside the fitted range were clamped", clamped);
  if (stats) stats->clamped = clamped;

  switch (model.mode) {
    case ContinuousMode::local_bc:
      for (double& p : out) p = std::max((*model.balance)(p), floor);
      break;
    case ContinuousMode::local_mbc:
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::max(mbc_value(model, out[i], s[i]), floor);
      }
      break;
    case ContinuousMode::multi_iter_cont:
      for (const auto& step : model.steps) {
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = step_update(step, *model.credibility, model.config.eta, floor, out[i], s[i]);
        }
      }
      break;
  }
  return out;
}

ContinuousCredibilitySearch select_credibility_continuous(
    const Portfolio& train, std::span<const double> train_premium,
    std::span<const double> train_s, const Portfolio& validation,
    std::span<const double> validation_premium, std::span<const double> validation_s,
    ContinuousConfig config, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("credibility grid is empty");
  ContinuousCredibilitySearch search;
  search.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  for (double c : grid) {
    config.credibility = c;
    const auto fit = iterate_multical_continuous(train, train_premium, train_s, config);
    const auto applied = apply_continuous(fit.model, validation_premium, validation_s);
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
