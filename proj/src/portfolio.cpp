#include "multical/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "multical/error.hpp"

namespace multical {

std::string_view to_string(Fold fold) {
  switch (fold) {
    case Fold::train:
      return "train";
    case Fold::validation:
      return "validation";
    case Fold::test:
      return "test";
  }
  return "train";
}

Fold parse_fold(std::string_view text) {
  if (text == "train") return Fold::train;
  if (text == "validation") return Fold::validation;
  if (text == "test") return Fold::test;
  throw ValidationError(fmt::format("unknown fold '{}'", text));
}

std::optional<int> Sensitive::find_level(std::string_view label) const {
  auto it = std::find(levels.begin(), levels.end(), label);
  if (it == levels.end()) return std::nullopt;
  return static_cast<int>(it - levels.begin());
}

Portfolio::Portfolio(PortfolioData data) : data_(std::move(data)) {
  const std::size_t n = data_.claims.size();
  if (data_.exposure.size() != n) {
    throw ValidationError("exposure and claim vectors differ in length");
  }
  if (data_.ids.empty()) {
    data_.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) data_.ids[i] = std::to_string(i + 1);
  }
  if (data_.ids.size() != n) throw ValidationError("id vector has wrong length");
  for (std::size_t i = 0; i < n; ++i) {
    const double w = data_.exposure[i];
    const double c = data_.claims[i];
    if (!std::isfinite(w) || w <= 0.0) {
      throw ValidationError(i, fmt::format("exposure must be positive, got {}", w));
    }
    if (!std::isfinite(c) || c < 0.0) {
      throw ValidationError(i, fmt::format("claim count must be non-negative, got {}", c));
    }
  }
  if (data_.baseline) {
    if (data_.baseline->size() != n) throw ValidationError("baseline premium has wrong length");
    for (std::size_t i = 0; i < n; ++i) {
      const double p = (*data_.baseline)[i];
      if (!std::isfinite(p) || p <= 0.0) {
        throw ValidationError(i, fmt::format("baseline premium must be positive, got {}", p));
      }
    }
  }
  for (const auto& col : data_.features) {
    if (col.size() != n) {
      throw SchemaError(col.name, "column length differs from the number of records");
    }
  }
  const auto& s = data_.sensitive;
  if (s.kind == SensitiveKind::categorical) {
    if (s.codes.size() != n) throw ValidationError("sensitive codes have wrong length");
    for (std::size_t i = 0; i < n; ++i) {
      if (s.codes[i] < 0 || static_cast<std::size_t>(s.codes[i]) >= s.levels.size()) {
        throw ValidationError(i, "sensitive code out of range");
      }
    }
  } else if (s.kind == SensitiveKind::continuous) {
    if (s.values.size() != n) throw ValidationError("sensitive values have wrong length");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.values[i])) throw ValidationError(i, "sensitive value is not finite");
    }
  }
  if (!data_.folds.empty() && data_.folds.size() != n) {
    throw ValidationError("fold tags have wrong length");
  }
}

std::span<const double> Portfolio::baseline() const {
  if (!data_.baseline) throw SchemaError("premium", "portfolio has no baseline premium");
  return *data_.baseline;
}

const Column& Portfolio::feature(std::string_view name) const {
  for (const auto& col : data_.features) {
    if (col.name == name) return col;
  }
  throw SchemaError(std::string(name), "no such column");
}

bool Portfolio::has_feature(std::string_view name) const {
  return std::any_of(data_.features.begin(), data_.features.end(),
                     [&](const Column& c) { return c.name == name; });
}

std::vector<std::string> Portfolio::layout() const {
  if (!data_.layout.empty()) return data_.layout;
  std::vector<std::string> out{data_.roles.id, data_.roles.claims, data_.roles.exposure};
  for (const auto& col : data_.features) out.push_back(col.name);
  if (data_.roles.premium) out.push_back(*data_.roles.premium);
  if (data_.roles.split) out.push_back(*data_.roles.split);
  return out;
}

std::vector<double> Portfolio::frequency() const {
  std::vector<double> y(size());
  for (std::size_t i = 0; i < size(); ++i) y[i] = data_.claims[i] / data_.exposure[i];
  return y;
}

double Portfolio::total_exposure() const {
  return std::accumulate(data_.exposure.begin(), data_.exposure.end(), 0.0);
}

double Portfolio::total_claims() const {
  return std::accumulate(data_.claims.begin(), data_.claims.end(), 0.0);
}

PolicyRecord Portfolio::record(std::size_t row) const {
  PolicyRecord r;
  r.id = data_.ids.at(row);
  r.claim_count = data_.claims[row];
  r.exposure = data_.exposure[row];
  if (data_.baseline) r.baseline_premium = (*data_.baseline)[row];
  const auto& s = data_.sensitive;
  if (s.kind == SensitiveKind::categorical) {
    r.sensitive = s.levels[static_cast<std::size_t>(s.codes[row])];
  } else if (s.kind == SensitiveKind::continuous) {
    r.sensitive = s.values[row];
  }
  for (const auto& col : data_.features) {
    if (col.kind == ColumnKind::numeric) {
      r.features.emplace_back(col.name, col.numeric[row]);
    } else {
      r.features.emplace_back(col.name, col.text[row]);
    }
  }
  return r;
}

std::vector<std::size_t> Portfolio::rows_in(Fold fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (this->fold(i) == fold) rows.push_back(i);
  }
  return rows;
}

namespace {

template <typename T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace

Portfolio Portfolio::subset(std::span<const std::size_t> rows) const {
  for (auto r : rows) {
    if (r >= size()) throw ValidationError("subset row out of range");
  }
  PortfolioData d;
  d.ids = pick(data_.ids, rows);
  d.claims = pick(data_.claims, rows);
  d.exposure = pick(data_.exposure, rows);
  if (data_.baseline) d.baseline = pick(*data_.baseline, rows);
  d.sensitive.kind = data_.sensitive.kind;
  d.sensitive.name = data_.sensitive.name;
  d.sensitive.levels = data_.sensitive.levels;
  if (data_.sensitive.kind == SensitiveKind::categorical) {
    d.sensitive.codes = pick(data_.sensitive.codes, rows);
  } else if (data_.sensitive.kind == SensitiveKind::continuous) {
    d.sensitive.values = pick(data_.sensitive.values, rows);
  }
  for (const auto& col : data_.features) {
    Column c{col.name, col.kind, {}, {}};
    if (col.kind == ColumnKind::numeric) {
      c.numeric = pick(col.numeric, rows);
    } else {
      c.text = pick(col.text, rows);
    }
    d.features.push_back(std::move(c));
  }
  if (!data_.folds.empty()) d.folds = pick(data_.folds, rows);
  d.roles = data_.roles;
  d.layout = data_.layout;
  return Portfolio(std::move(d));
}

Portfolio Portfolio::fold_subset(Fold fold) const {
  const auto rows = rows_in(fold);
  return subset(rows);
}

Portfolio Portfolio::with_folds(std::vector<Fold> folds) const {
  PortfolioData d = data_;
  d.folds = std::move(folds);
  if (!d.roles.split) {
    d.roles.split = "split";
    if (!d.layout.empty()) d.layout.push_back("split");
  }
  return Portfolio(std::move(d));
}

Portfolio Portfolio::with_baseline(std::vector<double> premium, std::string column_name) const {
  PortfolioData d = data_;
  d.baseline = std::move(premium);
  if (d.roles.premium != column_name) {
    if (!d.layout.empty()) {
      if (d.roles.premium) {
        std::replace(d.layout.begin(), d.layout.end(), *d.roles.premium, column_name);
      } else {
        d.layout.push_back(column_name);
      }
    }
    d.roles.premium = std::move(column_name);
  }
  return Portfolio(std::move(d));
}

Portfolio Portfolio::with_sensitive(Sensitive sensitive) const {
  PortfolioData d = data_;
  d.sensitive = std::move(sensitive);
  return Portfolio(std::move(d));
}

Sensitive categorical_sensitive(std::string name, std::span<const std::string> labels) {
  Sensitive s;
  s.kind = SensitiveKind::categorical;
  s.name = std::move(name);
  s.levels.assign(labels.begin(), labels.end());
  std::sort(s.levels.begin(), s.levels.end());
  s.levels.erase(std::unique(s.levels.begin(), s.levels.end()), s.levels.end());
  s.codes.reserve(labels.size());
  for (const auto& label : labels) {
    const auto it = std::lower_bound(s.levels.begin(), s.levels.end(), label);
    s.codes.push_back(static_cast<int>(it - s.levels.begin()));
  }
  return s;
}

Sensitive continuous_sensitive(std::string name, std::vector<double> values) {
  Sensitive s;
  s.kind = SensitiveKind::continuous;
  s.name = std::move(name);
  s.values = std::move(values);
  return s;
}

Portfolio make_portfolio(std::vector<double> claims, std::vector<double> exposure,
                         std::vector<std::string> groups) {
  PortfolioData d;
  d.claims = std::move(claims);
  d.exposure = std::move(exposure);
  if (!groups.empty()) {
    if (groups.size() != d.claims.size()) throw ValidationError("group labels have wrong length");
    d.sensitive = categorical_sensitive("S", groups);
    d.features.push_back(Column{"S", ColumnKind::categorical, {}, std::move(groups)});
  }
  return Portfolio(std::move(d));
}

std::vector<std::string> bin_categorical(std::span<const double> values,
                                         std::span<const double> edges, double lower) {
  if (edges.empty()) throw ConfigError("bin edges must not be empty");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k] > edges[k - 1])) throw ConfigError("bin edges must be strictly ascending");
  }
  std::vector<std::string> labels;
  labels.reserve(edges.size() + 1);
  labels.push_back(fmt::format("({:g},{:g}]", lower, edges[0]));
  for (std::size_t k = 1; k < edges.size(); ++k) {
    labels.push_back(fmt::format("({:g},{:g}]", edges[k - 1], edges[k]));
  }
  labels.push_back(fmt::format(">{:g}", edges.back()));

  std::vector<std::string> out;
  out.reserve(values.size());
  for (double v : values) {
    const auto k = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), v) -
                                            edges.begin());
    out.push_back(labels[k]);
  }
  return out;
}

Portfolio split(const Portfolio& portfolio, std::span<const double> fractions,
                std::uint64_t seed) {
  if (fractions.size() != 3) throw ConfigError("split needs three fractions");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ConfigError(fmt::format("split fractions sum to {}, expected 1", sum));
  }

  const auto& s = portfolio.sensitive();
  std::vector<std::vector<std::size_t>> strata;
  if (s.kind == SensitiveKind::categorical) {
    strata.resize(s.level_count());
    for (std::size_t i = 0; i < portfolio.size(); ++i) {
      strata[static_cast<std::size_t>(s.codes[i])].push_back(i);
    }
  } else {
    strata.emplace_back(portfolio.size());
    std::iota(strata[0].begin(), strata[0].end(), std::size_t{0});
  }

  std::mt19937_64 rng(seed);
  std::vector<Fold> folds(portfolio.size(), Fold::test);
  for (auto& rows : strata) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const double m = static_cast<double>(rows.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * m));
    const auto n_valid = std::min(rows.size() - std::min(rows.size(), n_train),
                                  static_cast<std::size_t>(std::llround(fractions[1] * m)));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (j < n_train) {
        folds[rows[j]] = Fold::train;
      } else if (j < n_train + n_valid) {
        folds[rows[j]] = Fold::validation;
      }
    }
  }
  return portfolio.with_folds(std::move(folds));
}

}  // namespace multical
