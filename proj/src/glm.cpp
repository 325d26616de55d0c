#include "multical/glm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "multical/error.hpp"

namespace multical {

namespace {

// Level index per record, or -1 when the level is unknown to the encoding.
std::vector<int> level_codes(const FeatureEncoding& enc, const Column& column) {
  const std::size_t n = column.size();
  std::vector<int> out(n);
  if (enc.kind == ColumnKind::numeric) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(enc.bins.bin_of(column.numeric[i]));
    return out;
  }
  std::map<std::string, int, std::less<>> index;
  for (std::size_t l = 0; l < enc.levels.size(); ++l) index.emplace(enc.levels[l], static_cast<int>(l));
  for (std::size_t i = 0; i < n; ++i) {
    auto it = index.find(column.text[i]);
    out[i] = it == index.end() ? -1 : it->second;
  }
  return out;
}

const Column& checked_feature(const Portfolio& portfolio, const std::string& name) {
  if (!portfolio.has_feature(name)) throw SchemaError(name, "feature not found");
  return portfolio.feature(name);
}

double loglik(std::span<const double> claims, std::span<const double> mu) {
  double ll = 0.0;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    ll += (claims[i] > 0.0 ? claims[i] * std::log(mu[i]) : 0.0) - mu[i];
  }
  return ll;
}

}  // namespace

void GlmConfig::validate() const {
  if (numeric_bins < 1) throw ConfigError("numeric_bins must be >= 1");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
}

GlmModel fit_baseline(const Portfolio& portfolio, const std::vector<std::string>& features,
                      const GlmConfig& config) {
  config.validate();
  const std::size_t n = portfolio.size();
  if (n == 0) throw DomainError("training fold is empty");
  const auto claims = portfolio.claims();
  const auto w = portfolio.exposure();
  if (!(portfolio.total_claims() > 0.0)) throw DomainError("no claims in the training fold");

  GlmModel model;
  model.config = config;
  std::vector<std::vector<int>> codes;
  int next = 0;
  for (const auto& name : features) {
    if (std::count(features.begin(), features.end(), name) > 1) {
      throw ConfigError(fmt::format("feature '{}' listed twice", name));
    }
    const Column& col = checked_feature(portfolio, name);
    FeatureEncoding enc;
    enc.name = name;
    enc.kind = col.kind;
    if (col.kind == ColumnKind::numeric) {
      enc.bins = quantile_bins(col.numeric, w, config.numeric_bins);
      for (std::size_t k = 0; k < enc.bins.bin_count(); ++k) enc.levels.push_back(std::to_string(k));
    } else {
      enc.levels = col.text;
      std::sort(enc.levels.begin(), enc.levels.end());
      enc.levels.erase(std::unique(enc.levels.begin(), enc.levels.end()), enc.levels.end());
    }
    auto c = level_codes(enc, col);
    std::vector<double> mass(enc.levels.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) mass[static_cast<std::size_t>(c[i])] += w[i];
    enc.reference = static_cast<std::size_t>(std::max_element(mass.begin(), mass.end()) - mass.begin());
    enc.column.assign(enc.levels.size(), -1);
    for (std::size_t l = 0; l < enc.levels.size(); ++l) {
      if (l == enc.reference) continue;
      enc.column[l] = next++;
      model.column_names.push_back(fmt::format("{}={}", name, enc.levels[l]));
    }
    for (auto& v : c) v = enc.column[static_cast<std::size_t>(v)];
    codes.push_back(std::move(c));
    model.features.push_back(std::move(enc));
  }
  const auto P = static_cast<Eigen::Index>(next) + 1;
  const std::size_t F = codes.size();

  // Weighted cross-products of the one-hot design (column 0 = intercept).
  auto cross = [&](std::span<const double> weight, std::span<const double> response,
                   Eigen::MatrixXd& A, Eigen::VectorXd& b) {
    A.setZero(P, P);
    b.setZero(P);
    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < n; ++i) {
      cols.clear();
      cols.push_back(0);
      for (std::size_t f = 0; f < F; ++f) {
        if (codes[f][i] >= 0) cols.push_back(codes[f][i] + 1);
      }
      for (std::size_t a = 0; a < cols.size(); ++a) {
        b[cols[a]] += weight[i] * response[i];
        for (std::size_t c = 0; c <= a; ++c) A(cols[a], cols[c]) += weight[i];
      }
    }
    A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
  };

  // Rank check on the exposure-weighted design.
  {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    cross(w, w, A, b);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < P) {
      std::vector<std::string> names;
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index j = qr.rank(); j < P; ++j) {
        const auto col = perm[j];
        names.push_back(col == 0 ? std::string("(intercept)")
                                 : model.column_names[static_cast<std::size_t>(col - 1)]);
      }
      throw DomainError(fmt::format("design matrix is rank deficient; collinear columns: {}",
                                    fmt::join(names, ", ")));
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(P);
  beta[0] = std::log(portfolio.total_claims() / portfolio.total_exposure());
  std::vector<double> eta(n), mu(n), weight(n), z(n);
  auto linear = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      double e = beta[0];
      for (std::size_t f = 0; f < F; ++f) {
        if (codes[f][i] >= 0) e += beta[codes[f][i] + 1];
      }
      eta[i] = e;
      mu[i] = w[i] * std::exp(e);
    }
  };
  linear();
  double ll = loglik(claims, mu);
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      weight[i] = mu[i];
      z[i] = eta[i] + (claims[i] - mu[i]) / mu[i];
    }
    cross(weight, z, A, b);
    const double scale = A.diagonal().mean();
    for (Eigen::Index j = 1; j < P; ++j) A(j, j) += config.ridge * scale;
    beta = A.ldlt().solve(b);
    if (!beta.allFinite()) throw ConvergenceError("IRLS produced non-finite coefficients");
    linear();
    const double next_ll = loglik(claims, mu);
    model.loglik_trace.push_back(next_ll);
    model.iterations = it + 1;
    const double change = std::abs(next_ll - ll) / std::max(std::abs(next_ll), 1e-300);
    ll = next_ll;
    if (change <= config.tolerance) {
      model.converged = true;
      break;
    }
  }
  if (!model.converged) {
    std::string trace;
    for (double v : model.loglik_trace) trace += fmt::format(" {:.10g}", v);
    throw ConvergenceError(fmt::format("IRLS did not converge in {} iterations; log-likelihood:{}",
                                       config.max_iterations, trace));
  }

  // Standard errors from the final information matrix.
  for (std::size_t i = 0; i < n; ++i) weight[i] = mu[i];
  cross(weight, weight, A, b);
  const double scale = A.diagonal().mean();
  for (Eigen::Index j = 1; j < P; ++j) A(j, j) += config.ridge * scale;
  const Eigen::MatrixXd cov = A.ldlt().solve(Eigen::MatrixXd::Identity(P, P));

  model.intercept = beta[0];
  model.intercept_std_error = std::sqrt(cov(0, 0));
  for (Eigen::Index j = 1; j < P; ++j) {
    model.coefficients.push_back(beta[j]);
    model.std_errors.push_back(std::sqrt(cov(j, j)));
  }
  return model;
}

std::vector<double> predict(const GlmModel& model, const Portfolio& portfolio,
                            GlmPredictStats* stats) {
  const std::size_t n = portfolio.size();
  std::vector<double> eta(n, model.intercept);
  std::size_t unseen = 0;
  for (const auto& enc : model.features) {
    const Column& col = checked_feature(portfolio, enc.name);
    if (col.kind != enc.kind) throw SchemaError(enc.name, "feature kind differs from the model");
    const auto codes = level_codes(enc, col);
    for (std::size_t i = 0; i < n; ++i) {
      int level = codes[i];
      if (level < 0) {
        ++unseen;
        level = static_cast<int>(enc.reference);
      }
      const int c = enc.column[static_cast<std::size_t>(level)];
      if (c >= 0) eta[i] += model.coefficients[static_cast<std::size_t>(c)];
    }
  }
  if (unseen > 0) {
    spdlog::warn("{} feature value(s) with levels unseen at fit time mapped to the reference level",
                 unseen);
  }
  if (stats) stats->unseen_levels += unseen;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(eta[i]);
  return out;
}

}  // namespace multical
