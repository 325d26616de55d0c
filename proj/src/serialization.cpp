#include "multical/serialization.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "multical/error.hpp"

namespace multical {

namespace {

// NaN / inf are written as null.
double number(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw ValidationError("model file: expected a number");
  return j.get<double>();
}

std::vector<double> numbers(const Json& j) {
  if (!j.is_array()) throw ValidationError("model file: expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(number(v));
  return out;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(fmt::format("model file: missing field '{}'", key));
  }
  return j.at(key);
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("model file: field '{}': {}", key, e.what()));
  }
}

std::string degree_name(Degree d) { return d == Degree::constant ? "constant" : "linear"; }

Degree parse_degree(const std::string& text) {
  if (text == "constant") return Degree::constant;
  if (text == "linear") return Degree::linear;
  throw ValidationError(fmt::format("model file: unknown degree '{}'", text));
}

Json header(const char* kind) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = kind;
  return j;
}

Json check_header(const std::string& text, const char* kind) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("model file is not valid JSON: {}", e.what()));
  }
  const int version = get<int>(j, "format_version");
  if (version > kFormatVersion) {
    throw ValidationError(fmt::format("model format version {} is newer than supported ({})",
                                      version, kFormatVersion));
  }
  if (version < 1) throw ValidationError("model file: bad format_version");
  const auto k = get<std::string>(j, "kind");
  if (k != kind) throw ValidationError(fmt::format("model file holds a '{}', expected '{}'", k, kind));
  return j;
}

}  // namespace

std::string to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::bc: return "bc";
    case CalibrationMode::mbc: return "mbc";
    case CalibrationMode::multi_iter: return "multi-iter";
    case CalibrationMode::local_bc: return "local-bc";
    case CalibrationMode::local_mbc: return "local-mbc";
    case CalibrationMode::multi_iter_cont: return "multi-iter-cont";
  }
  return "?";
}

CalibrationMode parse_calibration_mode(const std::string& text) {
  for (auto m : {CalibrationMode::bc, CalibrationMode::mbc, CalibrationMode::multi_iter,
                 CalibrationMode::local_bc, CalibrationMode::local_mbc,
                 CalibrationMode::multi_iter_cont}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError(fmt::format("unknown mode '{}'", text));
}

bool is_continuous(CalibrationMode mode) {
  return mode == CalibrationMode::local_bc || mode == CalibrationMode::local_mbc ||
         mode == CalibrationMode::multi_iter_cont;
}

Json to_json(const StepFunction& f) {
  Json j;
  j["knots"] = f.knots;
  j["values"] = f.values;
  j["domain_min"] = f.domain_min;
  j["domain_max"] = f.domain_max;
  return j;
}

StepFunction step_function_from_json(const Json& j) {
  StepFunction f;
  f.knots = numbers(field(j, "knots"));
  f.values = numbers(field(j, "values"));
  f.domain_min = number(field(j, "domain_min"));
  f.domain_max = number(field(j, "domain_max"));
  if (f.values.empty() || f.knots.size() != f.values.size()) {
    throw ValidationError("model file: step function knots and values differ in length");
  }
  return f;
}

Json to_json(const BinScheme& bins) {
  Json j;
  j["edges"] = bins.edges;
  j["lo"] = bins.lo;
  j["hi"] = bins.hi;
  return j;
}

BinScheme bin_scheme_from_json(const Json& j) {
  BinScheme b;
  b.edges = numbers(field(j, "edges"));
  b.lo = number(field(j, "lo"));
  b.hi = number(field(j, "hi"));
  return b;
}

Json to_json(const LocalSurface& s) {
  Json j;
  j["grid_p"] = s.grid_p;
  if (s.two_dimensional()) j["grid_s"] = s.grid_s;
  j["values"] = s.values;
  j["scales"] = s.two_dimensional() ? Json::array({s.scale_p, s.scale_s}) : Json::array({s.scale_p});
  Json ranges = Json::array();
  const auto rp = s.range_p();
  ranges.push_back(Json::array({rp.first, rp.second}));
  if (s.two_dimensional()) {
    const auto rs = s.range_s();
    ranges.push_back(Json::array({rs.first, rs.second}));
  }
  j["ranges"] = ranges;
  return j;
}

LocalSurface surface_from_json(const Json& j) {
  LocalSurface s;
  s.grid_p = numbers(field(j, "grid_p"));
  if (j.contains("grid_s")) s.grid_s = numbers(j.at("grid_s"));
  s.values = numbers(field(j, "values"));
  const auto scales = numbers(field(j, "scales"));
  if (!scales.empty()) s.scale_p = scales[0];
  if (scales.size() > 1) s.scale_s = scales[1];
  const std::size_t expected = s.grid_p.size() * (s.grid_s.empty() ? 1 : s.grid_s.size());
  if (s.grid_p.empty() || s.values.size() != expected) {
    throw ValidationError("model file: surface grid and values do not match");
  }
  return s;
}

Json to_json(const MultibalanceModel& m) {
  Json j;
  j["levels"] = m.levels;
  Json fs = Json::array();
  for (const auto& f : m.functions) fs.push_back(to_json(f));
  j["functions"] = fs;
  j["pooled"] = to_json(m.pooled);
  return j;
}

MultibalanceModel multibalance_from_json(const Json& j) {
  MultibalanceModel m;
  m.levels = get<std::vector<std::string>>(j, "levels");
  for (const auto& f : field(j, "functions")) m.functions.push_back(step_function_from_json(f));
  m.pooled = step_function_from_json(field(j, "pooled"));
  if (m.functions.size() != m.levels.size()) {
    throw ValidationError("model file: one step function per level expected");
  }
  return m;
}

Json to_json(const IterativeModel& m) {
  Json j;
  Json cfg;
  cfg["bins"] = m.config.bins;
  cfg["eta"] = m.config.eta;
  cfg["credibility"] = m.config.credibility;
  cfg["tolerance"] = m.config.tolerance;
  cfg["max_iterations"] = m.config.max_iterations;
  cfg["premium_floor"] = m.config.premium_floor;
  cfg["fixed_bins"] = m.config.fixed_bins;
  j["config"] = cfg;
  j["levels"] = m.levels;
  j["converged"] = m.converged;
  j["trace"] = m.trace;
  Json steps = Json::array();
  for (const auto& s : m.steps) {
    Json js;
    js["bins"] = to_json(s.bins);
    js["correction"] = s.correction;
    js["pooled_correction"] = s.pooled_correction;
    steps.push_back(js);
  }
  j["steps"] = steps;
  return j;
}

IterativeModel iterative_from_json(const Json& j) {
  IterativeModel m;
  const Json& cfg = field(j, "config");
  m.config.bins = get<std::size_t>(cfg, "bins");
  m.config.eta = number(field(cfg, "eta"));
  m.config.credibility = number(field(cfg, "credibility"));
  m.config.tolerance = number(field(cfg, "tolerance"));
  m.config.max_iterations = get<std::size_t>(cfg, "max_iterations");
  m.config.premium_floor = number(field(cfg, "premium_floor"));
  m.config.fixed_bins = get<bool>(cfg, "fixed_bins");
  m.levels = get<std::vector<std::string>>(j, "levels");
  m.converged = get<bool>(j, "converged");
  m.trace = numbers(field(j, "trace"));
  for (const auto& js : field(j, "steps")) {
    IterationStep s;
    s.bins = bin_scheme_from_json(field(js, "bins"));
    s.correction = numbers(field(js, "correction"));
    s.pooled_correction = numbers(field(js, "pooled_correction"));
    if (s.correction.size() != s.bins.bin_count() * m.levels.size() ||
        s.pooled_correction.size() != s.bins.bin_count()) {
      throw ValidationError("model file: correction table does not match bins x levels");
    }
    m.steps.push_back(std::move(s));
  }
  return m;
}

Json to_json(const ContinuousModel& m) {
  Json j;
  j["mode"] = to_string(m.mode);
  const auto& c = m.config;
  Json cfg;
  cfg["alpha"] = c.alpha;
  cfg["degree"] = c.degree ? Json(degree_name(*c.degree)) : Json(nullptr);
  cfg["knn_k"] = c.knn_k;
  cfg["grid_p"] = c.grid_p;
  cfg["grid_s"] = c.grid_s;
  cfg["grid_1d"] = c.grid_1d;
  cfg["bins_2d"] = c.bins_2d;
  cfg["eta"] = c.eta;
  cfg["credibility"] = c.credibility;
  cfg["tolerance"] = c.tolerance;
  cfg["max_iterations"] = c.max_iterations;
  cfg["premium_floor"] = c.premium_floor;
  cfg["stop_bins_p"] = c.stop_bins_p;
  cfg["stop_bins_s"] = c.stop_bins_s;
  cfg["centering_bins"] = c.centering_bins;
  j["config"] = cfg;
  if (m.balance) j["balance"] = to_json(*m.balance);
  if (m.joint) j["joint"] = to_json(*m.joint);
  if (m.centering) j["centering"] = to_json(*m.centering);
  if (m.credibility) j["credibility_surface"] = to_json(*m.credibility);
  Json steps = Json::array();
  for (const auto& s : m.steps) {
    Json js;
    js["marginal"] = to_json(s.marginal);
    js["joint"] = to_json(s.joint);
    js["centering"] = to_json(s.centering);
    steps.push_back(js);
  }
  j["steps"] = steps;
  j["stop_bins_p"] = to_json(m.stop_bins_p);
  j["stop_bins_s"] = to_json(m.stop_bins_s);
  j["converged"] = m.converged;
  j["trace"] = m.trace;
  j["deviance_trace"] = m.deviance_trace;
  j["z_checksums"] = m.z_checksums;
  j["centering_residual"] = m.centering_residual;
  return j;
}

ContinuousModel continuous_from_json(const Json& j) {
  ContinuousModel m;
  m.mode = parse_continuous_mode(get<std::string>(j, "mode"));
  const Json& cfg = field(j, "config");
  auto& c = m.config;
  c.alpha = number(field(cfg, "alpha"));
  if (!field(cfg, "degree").is_null()) c.degree = parse_degree(get<std::string>(cfg, "degree"));
  c.knn_k = get<std::size_t>(cfg, "knn_k");
  c.grid_p = get<std::size_t>(cfg, "grid_p");
  c.grid_s = get<std::size_t>(cfg, "grid_s");
  c.grid_1d = get<std::size_t>(cfg, "grid_1d");
  c.bins_2d = get<std::size_t>(cfg, "bins_2d");
  c.eta = number(field(cfg, "eta"));
  c.credibility = number(field(cfg, "credibility"));
  c.tolerance = number(field(cfg, "tolerance"));
  c.max_iterations = get<std::size_t>(cfg, "max_iterations");
  c.premium_floor = number(field(cfg, "premium_floor"));
  c.stop_bins_p = get<std::size_t>(cfg, "stop_bins_p");
  c.stop_bins_s = get<std::size_t>(cfg, "stop_bins_s");
  c.centering_bins = get<std::size_t>(cfg, "centering_bins");
  if (j.contains("balance")) m.balance = surface_from_json(j.at("balance"));
  if (j.contains("joint")) m.joint = surface_from_json(j.at("joint"));
  if (j.contains("centering")) m.centering = surface_from_json(j.at("centering"));
  if (j.contains("credibility_surface")) m.credibility = surface_from_json(j.at("credibility_surface"));
  for (const auto& js : field(j, "steps")) {
    ContinuousStep s;
    s.marginal = surface_from_json(field(js, "marginal"));
    s.joint = surface_from_json(field(js, "joint"));
    s.centering = surface_from_json(field(js, "centering"));
    m.steps.push_back(std::move(s));
  }
  m.stop_bins_p = bin_scheme_from_json(field(j, "stop_bins_p"));
  m.stop_bins_s = bin_scheme_from_json(field(j, "stop_bins_s"));
  m.converged = get<bool>(j, "converged");
  m.trace = numbers(field(j, "trace"));
  m.deviance_trace = numbers(field(j, "deviance_trace"));
  m.z_checksums = get<std::vector<std::uint64_t>>(j, "z_checksums");
  m.centering_residual = numbers(field(j, "centering_residual"));
  switch (m.mode) {
    case ContinuousMode::local_bc:
      if (!m.balance) throw ValidationError("model file: local-bc needs a balance surface");
      break;
    case ContinuousMode::local_mbc:
      if (!m.balance || !m.joint || !m.centering) {
        throw ValidationError("model file: local-mbc needs balance, joint and centering surfaces");
      }
      break;
    case ContinuousMode::multi_iter_cont:
      if (!m.credibility) throw ValidationError("model file: multi-iter-cont needs a credibility surface");
      break;
  }
  return m;
}

Json to_json(const GlmModel& m) {
  Json j;
  j["intercept"] = m.intercept;
  j["intercept_std_error"] = m.intercept_std_error;
  Json fs = Json::array();
  for (const auto& f : m.features) {
    Json jf;
    jf["name"] = f.name;
    jf["kind"] = f.kind == ColumnKind::numeric ? "numeric" : "categorical";
    if (f.kind == ColumnKind::numeric) jf["bins"] = to_json(f.bins);
    jf["levels"] = f.levels;
    jf["reference"] = f.reference;
    jf["column"] = f.column;
    fs.push_back(jf);
  }
  j["features"] = fs;
  j["column_names"] = m.column_names;
  j["coefficients"] = m.coefficients;
  j["std_errors"] = m.std_errors;
  Json cfg;
  cfg["numeric_bins"] = m.config.numeric_bins;
  cfg["ridge"] = m.config.ridge;
  cfg["tolerance"] = m.config.tolerance;
  cfg["max_iterations"] = m.config.max_iterations;
  j["config"] = cfg;
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  j["loglik_trace"] = m.loglik_trace;
  return j;
}

GlmModel glm_from_json(const Json& j) {
  GlmModel m;
  m.intercept = number(field(j, "intercept"));
  m.intercept_std_error = number(field(j, "intercept_std_error"));
  m.column_names = get<std::vector<std::string>>(j, "column_names");
  m.coefficients = numbers(field(j, "coefficients"));
  m.std_errors = numbers(field(j, "std_errors"));
  for (const auto& jf : field(j, "features")) {
    FeatureEncoding f;
    f.name = get<std::string>(jf, "name");
    const auto kind = get<std::string>(jf, "kind");
    if (kind != "numeric" && kind != "categorical") {
      throw ValidationError(fmt::format("model file: unknown feature kind '{}'", kind));
    }
    f.kind = kind == "numeric" ? ColumnKind::numeric : ColumnKind::categorical;
    if (f.kind == ColumnKind::numeric) f.bins = bin_scheme_from_json(field(jf, "bins"));
    f.levels = get<std::vector<std::string>>(jf, "levels");
    f.reference = get<std::size_t>(jf, "reference");
    f.column = get<std::vector<int>>(jf, "column");
    if (f.column.size() != f.levels.size() || f.reference >= f.levels.size()) {
      throw ValidationError(fmt::format("model file: bad encoding for feature '{}'", f.name));
    }
    for (int c : f.column) {
      if (c >= static_cast<int>(m.coefficients.size())) {
        throw ValidationError(fmt::format("model file: coefficient index out of range in '{}'", f.name));
      }
    }
    m.features.push_back(std::move(f));
  }
  const Json& cfg = field(j, "config");
  m.config.numeric_bins = get<std::size_t>(cfg, "numeric_bins");
  m.config.ridge = number(field(cfg, "ridge"));
  m.config.tolerance = number(field(cfg, "tolerance"));
  m.config.max_iterations = get<std::size_t>(cfg, "max_iterations");
  m.iterations = get<std::size_t>(j, "iterations");
  m.converged = get<bool>(j, "converged");
  m.loglik_trace = numbers(field(j, "loglik_trace"));
  return m;
}

Json to_json(const CalibrationModel& m) {
  Json j;
  j["mode"] = to_string(m.mode);
  j["sensitive"] = m.sensitive;
  switch (m.mode) {
    case CalibrationMode::bc: j["balance"] = to_json(*m.balance); break;
    case CalibrationMode::mbc: j["multibalance"] = to_json(*m.multibalance); break;
    case CalibrationMode::multi_iter: j["iterative"] = to_json(*m.iterative); break;
    default: j["continuous"] = to_json(*m.continuous); break;
  }
  return j;
}

CalibrationModel calibration_from_json(const Json& j) {
  CalibrationModel m;
  try {
    m.mode = parse_calibration_mode(get<std::string>(j, "mode"));
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
  m.sensitive = get<std::string>(j, "sensitive");
  switch (m.mode) {
    case CalibrationMode::bc: m.balance = step_function_from_json(field(j, "balance")); break;
    case CalibrationMode::mbc: m.multibalance = multibalance_from_json(field(j, "multibalance")); break;
    case CalibrationMode::multi_iter: m.iterative = iterative_from_json(field(j, "iterative")); break;
    default: {
      m.continuous = continuous_from_json(field(j, "continuous"));
      if (to_string(m.continuous->mode) != to_string(m.mode)) {
        throw ValidationError("model file: mode does not match the continuous model");
      }
    }
  }
  return m;
}

std::string dump_glm(const GlmModel& model) {
  Json j = header("glm");
  j["model"] = to_json(model);
  return j.dump(2) + "\n";
}

std::string dump_calibration(const CalibrationModel& model) {
  Json j = header("calibration");
  j["model"] = to_json(model);
  return j.dump(2) + "\n";
}

GlmModel parse_glm(const std::string& text) {
  return glm_from_json(field(check_header(text, "glm"), "model"));
}

CalibrationModel parse_calibration(const std::string& text) {
  return calibration_from_json(field(check_header(text, "calibration"), "model"));
}

}  // namespace multical
