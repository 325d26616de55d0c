#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multical/portfolio.hpp"

namespace multical {

// Column mapping for CSV ingestion. Defaults follow the freMTPL2freq names.
struct CsvSchema {
  std::string id_column = "IDpol";
  std::string claims_column = "ClaimNb";
  std::string exposure_column = "Exposure";
  std::optional<std::string> premium_column;
  std::optional<std::string> sensitive_column;
  SensitiveKind sensitive_kind = SensitiveKind::categorical;
  // Numeric sensitive columns are binned into categorical levels when set.
  std::vector<double> sensitive_edges;
  // Columns read as categorical even when every value parses as a number.
  std::vector<std::string> categorical_columns;
  // Honored when the file has it; otherwise every record is train.
  std::string split_column = "split";
  // Claim counts above this value are capped. Off by default.
  std::optional<double> cap_claims;
};

// Parses a header-ful, comma-separated file. Double-quoted fields are
// supported; quotes are stripped from categorical values.
Portfolio load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Portfolio parse_csv(std::string_view text, const CsvSchema& schema);

// Writes every column of `portfolio` in layout order. Numbers use 17
// significant digits, so `parse_csv(write)` reproduces the values exactly.
std::string to_csv(const Portfolio& portfolio);
void write_csv(const std::filesystem::path& path, const Portfolio& portfolio);

// Shortest form that round-trips ("%.17g").
std::string format_double(double value);

// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Quotes a field containing separators or quotes.
std::string quote_if_needed(const std::string& field);

// Splits one CSV line into fields, honoring double quotes.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace multical
