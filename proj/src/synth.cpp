#include "multical/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "multical/error.hpp"

namespace multical {

SplitMix64::result_type SplitMix64::operator()() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SplitMix64 record_stream(std::uint64_t seed, std::uint64_t record) {
  SplitMix64 mix(seed);
  const std::uint64_t base = mix();
  SplitMix64 rec(base ^ (record * 0xd1b54a32d192ed03ULL));
  return SplitMix64(rec());
}

void SynthConfig::validate() const {
  if (n < 1) throw ConfigError("synthetic portfolio needs n >= 1");
  if (group_kind == SensitiveKind::categorical && group_levels < 1) {
    throw ConfigError("categorical S needs at least one level");
  }
  if (!(s_correlation >= -1.0 && s_correlation <= 1.0)) {
    throw ConfigError("s_correlation must lie in [-1, 1]");
  }
  if (!(exposure_min > 0.0 && exposure_max >= exposure_min)) {
    throw ConfigError("exposure range must satisfy 0 < min <= max");
  }
  for (const auto& effects : categorical_effects) {
    if (effects.empty()) throw ConfigError("categorical feature without levels");
    if (effects.size() > 26) throw ConfigError("at most 26 levels per categorical feature");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(intercept) || !finite(beta_s) ||
      !std::all_of(numeric_effects.begin(), numeric_effects.end(), finite)) {
    throw ConfigError("synthetic effects must be finite");
  }
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.n;
  const std::size_t K = config.numeric_effects.size();
  const std::size_t M = config.categorical_effects.size();
  const bool categorical_s = config.group_kind == SensitiveKind::categorical;
  const bool has_s = config.group_kind != SensitiveKind::none;

  PortfolioData d;
  d.ids.resize(n);
  d.claims.resize(n);
  d.exposure.resize(n);
  std::vector<Column> numeric(K), categorical(M);
  for (std::size_t k = 0; k < K; ++k) {
    numeric[k] = Column{fmt::format("x{}", k + 1), ColumnKind::numeric, std::vector<double>(n), {}};
  }
  for (std::size_t m = 0; m < M; ++m) {
    categorical[m] =
        Column{fmt::format("c{}", m + 1), ColumnKind::categorical, {}, std::vector<std::string>(n)};
  }
  std::vector<std::string> s_labels(categorical_s ? n : 0);
  std::vector<double> s_values(has_s && !categorical_s ? n : 0);

  SynthData out;
  out.true_mu.resize(n);
  std::vector<std::vector<double>> terms(K + M + 1, std::vector<double>(n));

  const double rho = config.s_correlation;
  const double L = static_cast<double>(config.group_levels);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = record_stream(config.seed, i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    d.ids[i] = std::to_string(i + 1);
    d.exposure[i] = config.exposure_max - (config.exposure_max - config.exposure_min) * unif(rng);
    double eta = config.intercept;
    for (std::size_t k = 0; k < K; ++k) {
      const double x = normal(rng);
      numeric[k].numeric[i] = x;
      terms[k][i] = config.numeric_effects[k] * x;
      eta += terms[k][i];
    }
    for (std::size_t m = 0; m < M; ++m) {
      const auto& effects = config.categorical_effects[m];
      const auto level = std::min<std::size_t>(
          static_cast<std::size_t>(unif(rng) * static_cast<double>(effects.size())),
          effects.size() - 1);
      categorical[m].text[i] = std::string(1, static_cast<char>('a' + level));
      terms[K + m][i] = effects[level];
      eta += effects[level];
    }
    if (has_s) {
      const double x1 = K > 0 ? numeric[0].numeric[i] : 0.0;
      const double latent = rho * x1 + std::sqrt(1.0 - rho * rho) * normal(rng);
      double s_term = latent;
      if (categorical_s) {
        const double u = 0.5 * std::erfc(-latent / std::sqrt(2.0));
        const auto level = std::min<std::size_t>(static_cast<std::size_t>(u * L),
                                                 config.group_levels - 1);
        s_labels[i] = fmt::format("g{}", level + 1);
        s_term = config.group_levels > 1
                     ? (static_cast<double>(level) - (L - 1.0) / 2.0) / ((L - 1.0) / 2.0)
                     : 0.0;
      } else {
        s_values[i] = latent;
      }
      terms[K + M][i] = config.beta_s * s_term;
      eta += terms[K + M][i];
    }
    out.true_mu[i] = std::exp(eta);
    std::poisson_distribution<long> poisson(d.exposure[i] * out.true_mu[i]);
    d.claims[i] = static_cast<double>(poisson(rng));
  }

  for (std::size_t k = 0; k < K; ++k) out.terms.emplace_back(numeric[k].name, terms[k]);
  for (std::size_t m = 0; m < M; ++m) out.terms.emplace_back(categorical[m].name, terms[K + m]);
  if (has_s) out.terms.emplace_back("S", terms[K + M]);

  for (auto& c : numeric) d.features.push_back(std::move(c));
  for (auto& c : categorical) d.features.push_back(std::move(c));
  if (categorical_s) {
    d.sensitive = categorical_sensitive("S", s_labels);
    d.features.push_back(Column{"S", ColumnKind::categorical, {}, std::move(s_labels)});
  } else if (has_s) {
    d.sensitive = continuous_sensitive("S", s_values);
    d.features.push_back(Column{"S", ColumnKind::numeric, std::move(s_values), {}});
  }
  out.portfolio = Portfolio(std::move(d));
  return out;
}

std::vector<double> distorted_baseline(const SynthData& data, const Distortion& distortion) {
  if (!(distortion.scale > 0.0)) throw ConfigError("distortion scale must be positive");
  std::vector<double> log_mu(data.true_mu.size());
  for (std::size_t i = 0; i < log_mu.size(); ++i) log_mu[i] = std::log(data.true_mu[i]);
  auto drop = [&](const std::string& name) {
    for (const auto& [term, values] : data.terms) {
      if (term == name) {
        for (std::size_t i = 0; i < log_mu.size(); ++i) log_mu[i] -= values[i];
        return;
      }
    }
    throw ConfigError(fmt::format("cannot drop unknown feature '{}'", name));
  };
  if (distortion.drop_s && data.portfolio.sensitive().kind != SensitiveKind::none) drop("S");
  for (const auto& name : distortion.dropped_features) drop(name);

  std::vector<double> out(log_mu.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = distortion.scale * std::exp(distortion.power * log_mu[i]);
  }
  return out;
}

std::vector<double> distorted_baseline(std::span<const double> true_mu, double scale, double power) {
  if (!(scale > 0.0)) throw ConfigError("distortion scale must be positive");
  std::vector<double> out(true_mu.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * std::pow(true_mu[i], power);
  return out;
}

}  // namespace multical
