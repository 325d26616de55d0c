#include "multical/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "multical/categorical.hpp"
#include "multical/continuous.hpp"
#include "multical/csv.hpp"
#include "multical/error.hpp"
#include "multical/glm.hpp"
#include "multical/metrics.hpp"
#include "multical/serialization.hpp"
#include "multical/synth.hpp"

namespace multical {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

namespace {

// Exit code 2 for a calibration that stopped at max_iterations.
class Unconverged : public Error {
 public:
  using Error::Error;
};

struct InputOptions {
  std::string input;
  std::string id = "IDpol";
  std::string claims = "ClaimNb";
  std::string exposure = "Exposure";
  std::string premium;
  std::string baseline_model;
  std::string sensitive;
  std::string sensitive_kind = "auto";
  std::vector<double> sensitive_edges;
  std::vector<std::string> categorical;
  std::optional<double> cap_claims;
  std::string split_column = "split";
  std::vector<double> split;
};

struct Run {
  std::vector<std::string> args;
  std::vector<fs::path> inputs;
  std::uint64_t seed = 1;
};

void add_input_options(CLI::App* cmd, InputOptions& o, bool premium) {
  cmd->add_option("--input", o.input, "Portfolio CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--id-col", o.id, "Policy id column");
  cmd->add_option("--claims-col", o.claims, "Claim count column");
  cmd->add_option("--exposure-col", o.exposure, "Exposure column");
  cmd->add_option("--sensitive", o.sensitive, "Sensitive feature column");
  cmd->add_option("--sensitive-kind", o.sensitive_kind, "categorical, continuous or auto")
      ->check(CLI::IsMember({"auto", "categorical", "continuous"}));
  cmd->add_option("--sensitive-edges", o.sensitive_edges, "Bin a numeric S into levels")
      ->delimiter(',');
  cmd->add_option("--categorical", o.categorical, "Columns read as categorical")->delimiter(',');
  cmd->add_option("--cap-claims", o.cap_claims, "Cap claim counts");
  cmd->add_option("--split-col", o.split_column, "Fold column (train/validation/test)");
  cmd->add_option("--split", o.split, "Re-split with fractions train,validation,test")
      ->delimiter(',')
      ->expected(3);
  if (premium) {
    cmd->add_option("--premium", o.premium, "Baseline premium column");
    cmd->add_option("--baseline-model", o.baseline_model, "GLM model JSON giving the baseline")
        ->check(CLI::ExistingFile);
  }
}

Portfolio load_input(const InputOptions& o, Run& run, SensitiveKind default_kind) {
  CsvSchema schema;
  schema.id_column = o.id;
  schema.claims_column = o.claims;
  schema.exposure_column = o.exposure;
  if (!o.premium.empty()) schema.premium_column = o.premium;
  if (!o.sensitive.empty()) schema.sensitive_column = o.sensitive;
  schema.sensitive_kind = o.sensitive_kind == "continuous"    ? SensitiveKind::continuous
                          : o.sensitive_kind == "categorical" ? SensitiveKind::categorical
                                                              : default_kind;
  schema.sensitive_edges = o.sensitive_edges;
  schema.categorical_columns = o.categorical;
  schema.split_column = o.split_column;
  schema.cap_claims = o.cap_claims;
  run.inputs.emplace_back(o.input);
  auto portfolio = load_csv(o.input, schema);
  if (!o.split.empty()) portfolio = split(portfolio, o.split, run.seed);
  return portfolio;
}

// Baseline premiums from the CSV column or a fitted GLM.
std::vector<double> baseline_of(const Portfolio& portfolio, const InputOptions& o, Run& run) {
  if (!o.premium.empty() && !o.baseline_model.empty()) {
    throw ConfigError("give either --premium or --baseline-model, not both");
  }
  if (!o.baseline_model.empty()) {
    run.inputs.emplace_back(o.baseline_model);
    const auto glm = parse_glm(read_file(o.baseline_model));
    return predict(glm, portfolio);
  }
  if (o.premium.empty()) throw ConfigError("a baseline is required: --premium or --baseline-model");
  const auto b = portfolio.baseline();
  return {b.begin(), b.end()};
}

std::vector<std::string> group_labels(const Portfolio& portfolio) {
  const auto& s = portfolio.sensitive();
  std::vector<std::string> out(portfolio.size(), "all");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (s.kind == SensitiveKind::categorical) {
      out[i] = s.levels[static_cast<std::size_t>(s.codes[i])];
    } else if (s.kind == SensitiveKind::continuous) {
      out[i] = format_double(s.values[i]);
    }
  }
  return out;
}

std::string premiums_csv(const Portfolio& portfolio, std::span<const double> in,
                         std::span<const double> out) {
  const auto groups = group_labels(portfolio);
  std::string text = "id,premium_in,premium_out,group\n";
  for (std::size_t i = 0; i < portfolio.size(); ++i) {
    text += quote_if_needed(portfolio.ids()[i]);
    text += ',';
    text += format_double(in[i]);
    text += ',';
    text += format_double(out[i]);
    text += ',';
    text += quote_if_needed(groups[i]);
    text += '\n';
  }
  return text;
}

struct PremiumFile {
  std::vector<std::string> ids;
  std::vector<double> in;
  std::vector<double> out;
};

PremiumFile read_premiums(const fs::path& path) {
  const auto text = read_file(path);
  PremiumFile f;
  std::size_t start = 0, row = 0;
  bool header = true;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (header) {
      if (fields.size() < 3 || fields[0] != "id" || fields[1] != "premium_in" ||
          fields[2] != "premium_out") {
        throw SchemaError("premium_out", fmt::format("{} is not a premiums file", path.string()));
      }
      header = false;
      continue;
    }
    if (fields.size() < 3) throw ValidationError(row, "premiums file: short row");
    f.ids.push_back(fields[0]);
    try {
      f.in.push_back(std::stod(fields[1]));
      f.out.push_back(std::stod(fields[2]));
    } catch (const std::exception&) {
      throw ValidationError(row, "premiums file: unparseable premium");
    }
    ++row;
  }
  return f;
}

void check_aligned(const Portfolio& portfolio, const PremiumFile& f, const fs::path& path) {
  if (f.ids.size() != portfolio.size()) {
    throw ValidationError(fmt::format("{} has {} rows, the portfolio {}", path.string(),
                                      f.ids.size(), portfolio.size()));
  }
  for (std::size_t i = 0; i < f.ids.size(); ++i) {
    if (f.ids[i] != portfolio.ids()[i]) {
      throw ValidationError(i, fmt::format("{}: id '{}' does not match the portfolio",
                                           path.string(), f.ids[i]));
    }
  }
}

// Writes `content` atomically plus `<path>.manifest.json`.
void emit(const fs::path& path, const std::string& content, const Run& run) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, content);
  Json m;
  m["format_version"] = kFormatVersion;
  m["program"] = "multical";
  m["version"] = kVersion;
  m["args"] = std::vector<std::string>(run.args.begin() + 1, run.args.end());
  m["seed"] = run.seed;
  Json inputs = Json::array();
  for (const auto& in : run.inputs) {
    Json e;
    e["path"] = in.string();
    e["sha256"] = sha256_file(in);
    inputs.push_back(e);
  }
  m["inputs"] = inputs;
  m["output"] = {{"path", path.string()}, {"sha256", sha256_hex(content)}};
  write_file_atomic(path.string() + ".manifest.json", m.dump(2) + "\n");
}

std::vector<std::size_t> fold_rows(const Portfolio& portfolio, const std::string& fold) {
  if (fold == "all") {
    std::vector<std::size_t> rows(portfolio.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return rows;
  }
  return portfolio.rows_in(parse_fold(fold));
}

template <typename T>
std::vector<T> pick(std::span<const T> v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

// Grouping used by the diagnostics: categorical S levels, or exposure
// quantiles of a continuous S.
Grouping diagnostic_grouping(const Portfolio& portfolio, std::size_t bins) {
  const auto& s = portfolio.sensitive();
  if (s.kind == SensitiveKind::continuous) return quantile_grouping(s.values, portfolio.exposure(), bins);
  return grouping_of(portfolio);
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::size_t n = 10000;
  double beta_s = 0.0;
  std::vector<std::string> distort;
  std::string group_kind = "categorical";
  std::size_t levels = 3;
  double s_correlation = 0.0;
  double intercept = -2.3;
  std::vector<double> numeric_effects{0.3, -0.2};
  std::vector<std::string> drop_features;
  double exposure_min = 0.05;
  double exposure_max = 1.0;
  std::vector<double> split{0.6, 0.2, 0.2};
  std::string output;
};

bool parse_flag_word(const std::string& text) {
  if (text == "1" || text == "true" || text == "drop" || text == "dropS" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "keep" || text == "no") return false;
  throw ConfigError(fmt::format("cannot read '{}' as a drop-S flag", text));
}

int cmd_simulate(const SimulateOptions& o, Run& run) {
  SynthConfig sc;
  sc.n = o.n;
  sc.seed = run.seed;
  sc.beta_s = o.beta_s;
  sc.group_levels = o.levels;
  sc.s_correlation = o.s_correlation;
  sc.intercept = o.intercept;
  sc.numeric_effects = o.numeric_effects;
  sc.exposure_min = o.exposure_min;
  sc.exposure_max = o.exposure_max;
  sc.group_kind = o.group_kind == "continuous" ? SensitiveKind::continuous
                  : o.group_kind == "none"     ? SensitiveKind::none
                                               : SensitiveKind::categorical;
  Distortion dist;
  if (!o.distort.empty()) {
    if (o.distort.size() < 2 || o.distort.size() > 3) {
      throw ConfigError("--distort takes a,b or a,b,dropS");
    }
    try {
      dist.scale = std::stod(o.distort[0]);
      dist.power = std::stod(o.distort[1]);
    } catch (const std::exception&) {
      throw ConfigError("--distort: scale and power must be numbers");
    }
    if (o.distort.size() == 3) dist.drop_s = parse_flag_word(o.distort[2]);
  }
  dist.dropped_features = o.drop_features;
  auto data = generate(sc);
  const auto baseline = distorted_baseline(data, dist);
  PortfolioData d = data.portfolio.data();
  d.features.push_back(Column{"true_mu", ColumnKind::numeric, data.true_mu, {}});
  Portfolio p = Portfolio(std::move(d)).with_baseline(baseline, "baseline");
  p = split(p, o.split, run.seed);
  emit(o.output, to_csv(p), run);
  std::cout << fmt::format("wrote {} records to {}\n", p.size(), o.output);
  return 0;
}

// ---------------------------------------------------------------------------

struct FitOptions {
  InputOptions in;
  std::vector<std::string> features;
  std::vector<std::string> exclude{"true_mu", "baseline"};
  std::size_t feature_bins = 10;
  std::string premium_name = "premium";
  std::string model_out;
  std::string output;
};

int cmd_fit_baseline(const FitOptions& o, Run& run) {
  const auto portfolio = load_input(o.in, run, SensitiveKind::categorical);
  std::vector<std::string> features = o.features;
  if (features.empty()) {
    for (const auto& c : portfolio.features()) {
      if (c.name == o.in.sensitive) continue;
      if (std::find(o.exclude.begin(), o.exclude.end(), c.name) != o.exclude.end()) continue;
      features.push_back(c.name);
    }
  }
  if (features.empty()) spdlog::warn("no rating features: fitting an intercept-only model");
  GlmConfig cfg;
  cfg.numeric_bins = o.feature_bins;
  const auto train = portfolio.fold_subset(Fold::train);
  const auto model = fit_baseline(train, features, cfg);
  GlmPredictStats stats;
  auto premium = predict(model, portfolio, &stats);
  emit(o.model_out, dump_glm(model), run);
  if (!o.output.empty()) emit(o.output, to_csv(portfolio.with_baseline(premium, o.premium_name)), run);
  std::cout << fmt::format("GLM on {} training records, {} coefficients, {} IRLS iterations\n",
                           train.size(), model.coefficients.size() + 1, model.iterations);
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibrateOptions {
  InputOptions in;
  std::string mode = "multi-iter";
  std::size_t bins = 10;
  double eta = 0.2;
  std::string credibility = "auto";
  double tolerance = 0.01;
  std::size_t max_iterations = 500;
  double floor = 1e-6;
  std::size_t min_group_size = 30;
  double alpha = 0.5;
  std::string degree = "auto";
  std::size_t knn_k = 0;
  std::size_t grid_p = 64;
  std::size_t grid_s = 64;
  std::size_t grid_1d = 256;
  std::size_t bins_2d = 128;
  std::size_t stop_bins_p = 10;
  std::size_t stop_bins_s = 10;
  std::size_t centering_bins = 10;
  bool allow_unconverged = false;
  std::string model_out;
  std::string output;
};

std::optional<double> parse_credibility(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double c = std::stod(text, &used);
    if (used != text.size() || !(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument(text);
    return c;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("--credibility must be a positive number or 'auto', got '{}'", text));
  }
}

std::vector<double> apply_model(const CalibrationModel& model, const Portfolio& portfolio,
                                std::span<const double> premium) {
  const auto labels = group_labels(portfolio);
  switch (model.mode) {
    case CalibrationMode::bc: return evaluate(*model.balance, premium);
    case CalibrationMode::mbc: {
      ApplyStats stats;
      auto out = apply_multibalance(*model.multibalance, premium, labels, &stats);
      if (stats.unknown_levels > 0) {
        spdlog::warn("{} record(s) with S levels unseen at fit time use the pooled correction",
                     stats.unknown_levels);
      }
      return out;
    }
    case CalibrationMode::multi_iter: {
      ApplyStats stats;
      auto out = apply_iterative(*model.iterative, premium, labels, &stats);
      if (stats.unknown_levels > 0) {
        spdlog::warn("{} record(s) with S levels unseen at fit time use the pooled correction",
                     stats.unknown_levels);
      }
      return out;
    }
    default: {
      const auto& s = portfolio.sensitive();
      if (model.mode != CalibrationMode::local_bc && s.kind != SensitiveKind::continuous) {
        throw ConfigError("continuous modes need a continuous sensitive column");
      }
      ContinuousApplyStats stats;
      auto out = apply_continuous(*model.continuous, premium,
                                  s.kind == SensitiveKind::continuous ? std::span<const double>(s.values)
                                                                      : std::span<const double>{},
                                  &stats);
      if (stats.clamped > 0) {
        spdlog::warn("{} record(s) outside the fitted surface range were clamped", stats.clamped);
      }
      return out;
    }
  }
}

int cmd_calibrate(const CalibrateOptions& o, Run& run) {
  const auto mode = parse_calibration_mode(o.mode);
  const bool continuous = is_continuous(mode);
  if (mode != CalibrationMode::bc && mode != CalibrationMode::local_bc && o.in.sensitive.empty()) {
    spdlog::warn("no --sensitive column: every record is in one group");
  }
  const auto credibility = parse_credibility(o.credibility);
  const auto portfolio =
      load_input(o.in, run, continuous ? SensitiveKind::continuous : SensitiveKind::categorical);
  const auto premium = baseline_of(portfolio, o.in, run);
  const auto train_rows = portfolio.rows_in(Fold::train);
  const auto valid_rows = portfolio.rows_in(Fold::validation);
  if (train_rows.empty()) throw DomainError("training fold is empty");
  const auto train = portfolio.subset(train_rows);
  const auto valid = portfolio.subset(valid_rows);
  const auto pt = pick<double>(premium, train_rows);
  const auto pv = pick<double>(premium, valid_rows);

  CalibrationModel model;
  model.mode = mode;
  model.sensitive = o.in.sensitive;
  bool converged = true;
  std::size_t iterations = 0;
  switch (mode) {
    case CalibrationMode::bc:
      model.balance = balance_correct(train, pt, o.floor).function;
      break;
    case CalibrationMode::mbc: {
      MultibalanceOptions mo;
      mo.min_group_size = o.min_group_size;
      mo.floor = o.floor;
      model.multibalance = multibalance_correct(train, pt, grouping_of(train), mo).model;
      break;
    }
    case CalibrationMode::multi_iter: {
      CalibrationConfig cfg;
      cfg.bins = o.bins;
      cfg.eta = o.eta;
      cfg.tolerance = o.tolerance;
      cfg.max_iterations = o.max_iterations;
      cfg.premium_floor = o.floor;
      if (credibility) {
        cfg.credibility = *credibility;
      } else if (valid.empty()) {
        spdlog::warn("no validation fold: credibility c = {}", cfg.credibility);
      } else {
        const auto search = select_credibility(train, pt, grouping_of(train), valid, pv,
                                               group_labels(valid), cfg);
        cfg.credibility = search.best;
        spdlog::info("credibility c = {} chosen on validation deviance", cfg.credibility);
      }
      model.iterative = iterate_multical_categorical(train, pt, grouping_of(train), cfg).model;
      converged = model.iterative->converged;
      iterations = model.iterative->steps.size();
      break;
    }
    default: {
      ContinuousConfig cfg;
      cfg.alpha = o.alpha;
      if (o.degree == "constant") cfg.degree = Degree::constant;
      if (o.degree == "linear") cfg.degree = Degree::linear;
      cfg.knn_k = o.knn_k;
      cfg.grid_p = o.grid_p;
      cfg.grid_s = o.grid_s;
      cfg.grid_1d = o.grid_1d;
      cfg.bins_2d = o.bins_2d;
      cfg.eta = o.eta;
      cfg.tolerance = o.tolerance;
      cfg.max_iterations = o.max_iterations;
      cfg.premium_floor = o.floor;
      cfg.stop_bins_p = o.stop_bins_p;
      cfg.stop_bins_s = o.stop_bins_s;
      cfg.centering_bins = o.centering_bins;
      const auto& s = train.sensitive();
      if (mode != CalibrationMode::local_bc && s.kind != SensitiveKind::continuous) {
        throw ConfigError(fmt::format("mode {} needs a continuous --sensitive column", o.mode));
      }
      const std::span<const double> st = s.values;
      if (mode == CalibrationMode::local_bc) {
        model.continuous = local_balance_correct(train, pt, cfg).model;
      } else if (mode == CalibrationMode::local_mbc) {
        model.continuous = mbc_bivariate_centered(train, pt, st, cfg).model;
      } else {
        if (credibility) {
          cfg.credibility = *credibility;
        } else if (valid.empty()) {
          spdlog::warn("no validation fold: credibility c = {}", cfg.credibility);
        } else {
          const auto search = select_credibility_continuous(train, pt, st, valid, pv,
                                                            valid.sensitive().values, cfg);
          cfg.credibility = search.best;
          spdlog::info("credibility c = {} chosen on validation deviance", cfg.credibility);
        }
        model.continuous = iterate_multical_continuous(train, pt, st, cfg).model;
        converged = model.continuous->converged;
        iterations = model.continuous->steps.size();
      }
      break;
    }
  }
  if (!converged && !o.allow_unconverged) {
    throw Unconverged(fmt::format(
        "calibration did not converge in {} iterations (use --allow-unconverged to keep it)",
        o.max_iterations));
  }
  const auto out = apply_model(model, portfolio, premium);
  if (!o.model_out.empty()) emit(o.model_out, dump_calibration(model), run);
  if (!o.output.empty()) emit(o.output, premiums_csv(portfolio, premium, out), run);
  std::cout << fmt::format("mode {}: {} training records, {} iterations, converged {}\n",
                           o.mode, train.size(), iterations, converged ? "yes" : "no");
  return 0;
}

// ---------------------------------------------------------------------------

struct ApplyOptions {
  InputOptions in;
  std::string model;
  std::string output;
};

int cmd_apply(ApplyOptions o, Run& run) {
  run.inputs.emplace_back(o.model);
  const auto model = parse_calibration(read_file(o.model));
  if (o.in.sensitive.empty()) o.in.sensitive = model.sensitive;
  const auto portfolio = load_input(
      o.in, run, is_continuous(model.mode) ? SensitiveKind::continuous : SensitiveKind::categorical);
  const auto premium = baseline_of(portfolio, o.in, run);
  const auto out = apply_model(model, portfolio, premium);
  emit(o.output, premiums_csv(portfolio, premium, out), run);
  std::cout << fmt::format("applied {} model to {} records\n", to_string(model.mode), portfolio.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateOptions {
  InputOptions in;
  std::vector<std::string> premiums;
  std::string fold = "test";
  std::size_t bins = 10;
  std::string output;
};

Json metrics_json(const std::string& name, const Portfolio& portfolio, std::span<const double> premium,
                  const Grouping& grouping, std::size_t bins) {
  const auto report = diagnose(portfolio, premium, grouping, bins);
  Json j;
  j["name"] = name;
  j["deviance"] = report.deviance;
  j["gini"] = report.gini;
  j["global_balance_gap"] = report.global_balance_gap;
  j["multical_max_abs"] = report.multical.max_abs;
  j["multical_mean_abs"] = report.multical.mean_abs;
  return j;
}

int cmd_evaluate(const EvaluateOptions& o, Run& run) {
  const auto portfolio = load_input(o.in, run, SensitiveKind::categorical);
  const auto rows = fold_rows(portfolio, o.fold);
  if (rows.empty()) throw DomainError(fmt::format("fold '{}' is empty", o.fold));
  const auto part = portfolio.subset(rows);
  const auto grouping = diagnostic_grouping(part, o.bins);

  Json j;
  j["format_version"] = kFormatVersion;
  j["fold"] = o.fold;
  j["records"] = part.size();
  j["exposure"] = part.total_exposure();
  j["claims"] = part.total_claims();
  Json list = Json::array();
  bool first = true;
  for (const auto& path : o.premiums) {
    run.inputs.emplace_back(path);
    const auto f = read_premiums(path);
    check_aligned(portfolio, f, path);
    const auto in = pick<double>(f.in, rows);
    const auto out = pick<double>(f.out, rows);
    if (first) {
      list.push_back(metrics_json("baseline", part, in, grouping, o.bins));
      first = false;
    }
    list.push_back(metrics_json(fs::path(path).stem().string(), part, out, grouping, o.bins));
  }
  if (!o.in.premium.empty() || !o.in.baseline_model.empty()) {
    const auto base = pick<double>(baseline_of(portfolio, o.in, run), rows);
    list.push_back(metrics_json(o.in.premium.empty() ? "baseline_model" : o.in.premium, part, base,
                                grouping, o.bins));
  }
  if (list.empty()) throw ConfigError("nothing to evaluate: give --premiums or --premium");
  j["premiums"] = list;
  const std::string text = j.dump(2) + "\n";
  if (!o.output.empty()) emit(o.output, text, run);
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------

struct DiagnoseOptions {
  InputOptions in;
  std::string premiums;
  std::string column = "premium_out";
  std::string fold = "all";
  std::size_t bins = 10;
  std::string output;
  std::string report;
};

int cmd_diagnose(const DiagnoseOptions& o, Run& run) {
  const auto portfolio = load_input(o.in, run, SensitiveKind::categorical);
  std::vector<double> premium;
  if (!o.premiums.empty()) {
    run.inputs.emplace_back(o.premiums);
    const auto f = read_premiums(o.premiums);
    check_aligned(portfolio, f, o.premiums);
    if (o.column != "premium_in" && o.column != "premium_out") {
      throw ConfigError("--column must be premium_in or premium_out");
    }
    premium = o.column == "premium_in" ? f.in : f.out;
  } else {
    premium = baseline_of(portfolio, o.in, run);
  }
  const auto rows = fold_rows(portfolio, o.fold);
  if (rows.empty()) throw DomainError(fmt::format("fold '{}' is empty", o.fold));
  const auto part = portfolio.subset(rows);
  const auto p = pick<double>(premium, rows);
  const auto report = diagnose(part, p, diagnostic_grouping(part, o.bins), o.bins);
  const auto table = bias_table_csv(report.bias_table);
  if (!o.output.empty()) emit(o.output, table, run);
  Json j;
  j["format_version"] = kFormatVersion;
  j["fold"] = o.fold;
  j["records"] = part.size();
  j["deviance"] = report.deviance;
  j["gini"] = report.gini;
  j["global_balance_gap"] = report.global_balance_gap;
  j["multical_max_abs"] = report.multical.max_abs;
  j["multical_mean_abs"] = report.multical.mean_abs;
  const std::string text = j.dump(2) + "\n";
  if (!o.report.empty()) emit(o.report, text, run);
  std::cout << text;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  auto logger = spdlog::get("multical");
  if (!logger) logger = spdlog::stderr_color_mt("multical");
  spdlog::set_default_logger(logger);

  CLI::App app{"Premium autocalibration and multicalibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Run run;
  run.args = args;
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", run.seed, "Seed for all randomness"); };

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic portfolio");
  add_seed(simulate);
  simulate->add_option("--n", sim.n, "Record count")->check(CLI::PositiveNumber);
  simulate->add_option("--beta-s", sim.beta_s, "Effect of S on the log mean");
  simulate->add_option("--distort", sim.distort, "Baseline a,b[,dropS]: pi = a mu~^b")->delimiter(',');
  simulate->add_option("--group-kind", sim.group_kind, "categorical, continuous or none")
      ->check(CLI::IsMember({"categorical", "continuous", "none"}));
  simulate->add_option("--levels", sim.levels, "Levels of a categorical S");
  simulate->add_option("--s-correlation", sim.s_correlation, "Correlation of S with x1");
  simulate->add_option("--intercept", sim.intercept, "Log-mean intercept");
  simulate->add_option("--numeric-effects", sim.numeric_effects, "Effects of x1..xK")->delimiter(',');
  simulate->add_option("--drop-features", sim.drop_features, "Terms left out of the baseline")
      ->delimiter(',');
  simulate->add_option("--exposure-min", sim.exposure_min, "Smallest exposure");
  simulate->add_option("--exposure-max", sim.exposure_max, "Largest exposure");
  simulate->add_option("--split", sim.split, "Fold fractions")->delimiter(',')->expected(3);
  simulate->add_option("--output", sim.output, "Portfolio CSV")->required();

  FitOptions fit;
  auto* fitcmd = app.add_subcommand("fit-baseline", "Fit the Poisson GLM baseline on the train fold");
  add_seed(fitcmd);
  add_input_options(fitcmd, fit.in, false);
  fitcmd->add_option("--features", fit.features, "Rating features")->delimiter(',');
  fitcmd->add_option("--exclude", fit.exclude, "Columns never used as features")->delimiter(',');
  fitcmd->add_option("--feature-bins", fit.feature_bins, "Quantile bins per numeric feature");
  fitcmd->add_option("--premium-name", fit.premium_name, "Name of the premium column written");
  fitcmd->add_option("--model-out", fit.model_out, "GLM model JSON")->required();
  fitcmd->add_option("--output", fit.output, "Portfolio CSV with the fitted premium");

  CalibrateOptions cal;
  auto* calcmd = app.add_subcommand("calibrate", "Fit a calibration on the train fold");
  add_seed(calcmd);
  add_input_options(calcmd, cal.in, true);
  calcmd->add_option("--mode", cal.mode, "bc, mbc, multi-iter, local-bc, local-mbc, multi-iter-cont")
      ->check(CLI::IsMember({"bc", "mbc", "multi-iter", "local-bc", "local-mbc", "multi-iter-cont"}));
  calcmd->add_option("--bins", cal.bins, "Premium bins K");
  calcmd->add_option("--eta", cal.eta, "Step size");
  calcmd->add_option("--credibility", cal.credibility, "Credibility c, or auto");
  calcmd->add_option("--tol", cal.tolerance, "Stopping threshold");
  calcmd->add_option("--max-iter", cal.max_iterations, "Iteration cap");
  calcmd->add_option("--floor", cal.floor, "Premium floor");
  calcmd->add_option("--min-group-size", cal.min_group_size, "Smallest S level for mbc");
  calcmd->add_option("--alpha", cal.alpha, "Neighbourhood fraction");
  calcmd->add_option("--degree", cal.degree, "constant, linear or auto")
      ->check(CLI::IsMember({"auto", "constant", "linear"}));
  calcmd->add_option("--knn-k", cal.knn_k, "Neighbours for local exposure (0: default)");
  calcmd->add_option("--grid-p", cal.grid_p, "Surface nodes along the premium");
  calcmd->add_option("--grid-s", cal.grid_s, "Surface nodes along S");
  calcmd->add_option("--grid-1d", cal.grid_1d, "Nodes of 1-D curves");
  calcmd->add_option("--bins-2d", cal.bins_2d, "Cells per axis for 2-D fits (0: exact)");
  calcmd->add_option("--stop-bins-p", cal.stop_bins_p, "Stopping grid bins along the premium");
  calcmd->add_option("--stop-bins-s", cal.stop_bins_s, "Stopping grid bins along S");
  calcmd->add_option("--centering-bins", cal.centering_bins, "Premium bins kept exactly centred");
  calcmd->add_flag("--allow-unconverged", cal.allow_unconverged, "Keep an unconverged fit");
  calcmd->add_option("--model-out", cal.model_out, "Calibration model JSON");
  calcmd->add_option("--output", cal.output, "Premiums CSV");

  ApplyOptions ap;
  auto* apcmd = app.add_subcommand("apply", "Apply a calibration model");
  add_seed(apcmd);
  add_input_options(apcmd, ap.in, true);
  apcmd->add_option("--model", ap.model, "Calibration model JSON")->required()->check(CLI::ExistingFile);
  apcmd->add_option("--output", ap.output, "Premiums CSV")->required();

  EvaluateOptions ev;
  auto* evcmd = app.add_subcommand("evaluate", "Deviance, Gini and bias metrics on a fold");
  add_seed(evcmd);
  add_input_options(evcmd, ev.in, true);
  evcmd->add_option("--premiums", ev.premiums, "Premiums CSVs")->delimiter(',')->check(CLI::ExistingFile);
  evcmd->add_option("--fold", ev.fold, "train, validation, test or all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  evcmd->add_option("--bins", ev.bins, "Premium bins of the bias table");
  evcmd->add_option("--output", ev.output, "Metrics JSON");

  DiagnoseOptions dg;
  auto* dgcmd = app.add_subcommand("diagnose", "Residual-bias table of one premium vector");
  add_seed(dgcmd);
  add_input_options(dgcmd, dg.in, true);
  dgcmd->add_option("--premiums", dg.premiums, "Premiums CSV")->check(CLI::ExistingFile);
  dgcmd->add_option("--column", dg.column, "premium_in or premium_out");
  dgcmd->add_option("--fold", dg.fold, "train, validation, test or all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  dgcmd->add_option("--bins", dg.bins, "Premium bins");
  dgcmd->add_option("--output", dg.output, "Bias table CSV");
  dgcmd->add_option("--report", dg.report, "Report JSON");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*simulate) return cmd_simulate(sim, run);
    if (*fitcmd) return cmd_fit_baseline(fit, run);
    if (*calcmd) return cmd_calibrate(cal, run);
    if (*apcmd) return cmd_apply(ap, run);
    if (*evcmd) return cmd_evaluate(ev, run);
    if (*dgcmd) return cmd_diagnose(dg, run);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace multical
