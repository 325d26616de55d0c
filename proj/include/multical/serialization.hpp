#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "multical/categorical.hpp"
#include "multical/continuous.hpp"
#include "multical/glm.hpp"
#include "multical/isotonic.hpp"
#include "multical/smoothing.hpp"

namespace multical {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

enum class CalibrationMode { bc, mbc, multi_iter, local_bc, local_mbc, multi_iter_cont };

std::string to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(const std::string& text);
bool is_continuous(CalibrationMode mode);

// Fitted calibration of any mode. Exactly the member matching `mode` is set.
struct CalibrationModel {
  CalibrationMode mode = CalibrationMode::bc;
  std::string sensitive;
  std::optional<StepFunction> balance;
  std::optional<MultibalanceModel> multibalance;
  std::optional<IterativeModel> iterative;
  std::optional<ContinuousModel> continuous;
};

Json to_json(const StepFunction& f);
Json to_json(const BinScheme& bins);
Json to_json(const LocalSurface& surface);
Json to_json(const MultibalanceModel& model);
Json to_json(const IterativeModel& model);
Json to_json(const ContinuousModel& model);
Json to_json(const GlmModel& model);
Json to_json(const CalibrationModel& model);

StepFunction step_function_from_json(const Json& j);
BinScheme bin_scheme_from_json(const Json& j);
LocalSurface surface_from_json(const Json& j);
MultibalanceModel multibalance_from_json(const Json& j);
IterativeModel iterative_from_json(const Json& j);
ContinuousModel continuous_from_json(const Json& j);
GlmModel glm_from_json(const Json& j);
CalibrationModel calibration_from_json(const Json& j);

// Top-level documents carry "format_version" and "kind"; loaders reject
// other kinds and newer versions.
std::string dump_glm(const GlmModel& model);
std::string dump_calibration(const CalibrationModel& model);
GlmModel parse_glm(const std::string& text);
CalibrationModel parse_calibration(const std::string& text);

}  // namespace multical
