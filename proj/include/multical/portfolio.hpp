#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace multical {

enum class ColumnKind { numeric, categorical };

// One raw feature column. Exactly one of `numeric` / `text` is populated,
// according to `kind`.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> numeric;
  std::vector<std::string> text;

  std::size_t size() const {
    return kind == ColumnKind::numeric ? numeric.size() : text.size();
  }
};

enum class Fold : std::uint8_t { train, validation, test };

std::string_view to_string(Fold fold);
Fold parse_fold(std::string_view text);

enum class SensitiveKind { none, categorical, continuous };

// The sensitive feature S. Categorical S is stored as integer codes into
// `levels`; continuous S as raw values.
struct Sensitive {
  SensitiveKind kind = SensitiveKind::none;
  std::string name;
  std::vector<std::string> levels;
  std::vector<int> codes;
  std::vector<double> values;

  std::size_t level_count() const { return levels.size(); }
  // Index of `label` in `levels`, or nullopt.
  std::optional<int> find_level(std::string_view label) const;
};

using FeatureValue = std::variant<std::string, double>;

// Row view of a portfolio entry.
struct PolicyRecord {
  std::string id;
  double claim_count = 0.0;
  double exposure = 0.0;
  std::optional<double> baseline_premium;
  std::optional<FeatureValue> sensitive;
  std::vector<std::pair<std::string, FeatureValue>> features;

  double frequency() const { return claim_count / exposure; }
};

// Names of the role columns in a CSV layout.
struct ColumnRoles {
  std::string id = "IDpol";
  std::string claims = "ClaimNb";
  std::string exposure = "Exposure";
  std::optional<std::string> premium;
  std::optional<std::string> split;
};

struct PortfolioData {
  std::vector<std::string> ids;
  std::vector<double> claims;
  std::vector<double> exposure;
  std::optional<std::vector<double>> baseline;
  Sensitive sensitive;
  // Non-role columns in file order. The sensitive source column stays here.
  std::vector<Column> features;
  // Empty means every record is in the training fold.
  std::vector<Fold> folds;
  ColumnRoles roles;
  // Full column order of the source file, role columns included. Empty for
  // programmatically built portfolios.
  std::vector<std::string> layout;
};

// Columnar, immutable collection of policies. The constructor validates
// every record invariant.
class Portfolio {
 public:
  Portfolio() = default;
  explicit Portfolio(PortfolioData data);

  std::size_t size() const { return data_.claims.size(); }
  bool empty() const { return size() == 0; }

  std::span<const std::string> ids() const { return data_.ids; }
  std::span<const double> claims() const { return data_.claims; }
  std::span<const double> exposure() const { return data_.exposure; }
  bool has_baseline() const { return data_.baseline.has_value(); }
  std::span<const double> baseline() const;
  const Sensitive& sensitive() const { return data_.sensitive; }
  std::span<const Column> features() const { return data_.features; }
  const Column& feature(std::string_view name) const;
  bool has_feature(std::string_view name) const;
  Fold fold(std::size_t row) const {
    return data_.folds.empty() ? Fold::train : data_.folds[row];
  }
  const ColumnRoles& roles() const { return data_.roles; }
  const PortfolioData& data() const { return data_; }

  // Column names in output order, role columns included.
  std::vector<std::string> layout() const;

  std::vector<double> frequency() const;
  double total_exposure() const;
  double total_claims() const;
  PolicyRecord record(std::size_t row) const;

  std::vector<std::size_t> rows_in(Fold fold) const;
  Portfolio subset(std::span<const std::size_t> rows) const;
  Portfolio fold_subset(Fold fold) const;
  Portfolio with_folds(std::vector<Fold> folds) const;
  Portfolio with_baseline(std::vector<double> premium, std::string column_name) const;
  Portfolio with_sensitive(Sensitive sensitive) const;

 private:
  PortfolioData data_;
};

// Builds a portfolio from plain arrays; `groups` (optional) are categorical
// sensitive labels. Used by tests and the synthetic generator.
Portfolio make_portfolio(std::vector<double> claims, std::vector<double> exposure,
                         std::vector<std::string> groups = {});

// Builds a categorical Sensitive from labels; levels are sorted.
Sensitive categorical_sensitive(std::string name, std::span<const std::string> labels);
Sensitive continuous_sensitive(std::string name, std::vector<double> values);

// Maps each value to a right-closed interval label. `lower` only affects the
// first label, e.g. edges {3,9} give "(0,3]", "(3,9]", ">9".
std::vector<std::string> bin_categorical(std::span<const double> values,
                                         std::span<const double> edges,
                                         double lower = 0.0);

// Deterministic stratified split. Strata are the categorical sensitive
// levels; continuous or absent S yields a single stratum. Within a stratum
// of size m, round(f_train*m) records go to train, round(f_valid*m) to
// validation and the remainder to test.
Portfolio split(const Portfolio& portfolio, std::span<const double> fractions,
                std::uint64_t seed);

}  // namespace multical
