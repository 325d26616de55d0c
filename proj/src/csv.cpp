#include "multical/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "multical/error.hpp"

namespace multical {

namespace {

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::string format_double(double value) { return fmt::format("{:.17g}", value); }

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        current += ch;
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += ch;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

Portfolio parse_csv(std::string_view text, const CsvSchema& schema) {
  // Strip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  const auto lines = split_lines(text);
  if (lines.empty()) throw SchemaError("<header>", "file is empty; a header row is mandatory");

  const auto header = split_csv_line(lines[0]);
  const std::size_t n_cols = header.size();
  const std::size_t n = lines.size() - 1;

  std::vector<std::vector<std::string>> cells(n_cols, std::vector<std::string>(n));
  for (std::size_t r = 0; r < n; ++r) {
    auto fields = split_csv_line(lines[r + 1]);
    if (fields.size() != n_cols) {
      throw ValidationError(r, fmt::format("expected {} fields, found {}", n_cols, fields.size()));
    }
    for (std::size_t c = 0; c < n_cols; ++c) cells[c][r] = std::move(fields[c]);
  }

  auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto require = [&](const std::string& name) {
    auto idx = index_of(name);
    if (!idx) throw SchemaError(name, "required column is missing");
    return *idx;
  };
  auto numeric_column = [&](std::size_t c) {
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) {
      auto v = parse_double(cells[c][r]);
      if (!v) {
        throw ValidationError(r, fmt::format("column '{}': cannot parse '{}' as a number",
                                             header[c], cells[c][r]));
      }
      out[r] = *v;
    }
    return out;
  };

  PortfolioData d;
  d.layout = header;
  d.roles.id = schema.id_column;
  d.roles.claims = schema.claims_column;
  d.roles.exposure = schema.exposure_column;

  const auto id_idx = require(schema.id_column);
  const auto claims_idx = require(schema.claims_column);
  const auto exposure_idx = require(schema.exposure_column);
  d.ids = cells[id_idx];
  d.claims = numeric_column(claims_idx);
  d.exposure = numeric_column(exposure_idx);
  if (schema.cap_claims) {
    for (auto& c : d.claims) c = std::min(c, *schema.cap_claims);
  }

  std::optional<std::size_t> premium_idx;
  if (schema.premium_column) {
    premium_idx = require(*schema.premium_column);
    d.baseline = numeric_column(*premium_idx);
    d.roles.premium = schema.premium_column;
  }
  const auto split_idx = index_of(schema.split_column);
  if (split_idx) {
    d.roles.split = schema.split_column;
    d.folds.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      try {
        d.folds[r] = parse_fold(cells[*split_idx][r]);
      } catch (const ValidationError& e) {
        throw ValidationError(r, e.what());
      }
    }
  }

  for (std::size_t c = 0; c < n_cols; ++c) {
    if (c == id_idx || c == claims_idx || c == exposure_idx || c == premium_idx ||
        c == split_idx) {
      continue;
    }
    Column col;
    col.name = header[c];
    const bool forced = std::find(schema.categorical_columns.begin(),
                                  schema.categorical_columns.end(),
                                  col.name) != schema.categorical_columns.end();
    bool numeric = !forced;
    if (numeric) {
      for (std::size_t r = 0; r < n && numeric; ++r) numeric = parse_double(cells[c][r]).has_value();
    }
    if (numeric) {
      col.kind = ColumnKind::numeric;
      col.numeric = numeric_column(c);
    } else {
      col.kind = ColumnKind::categorical;
      col.text = std::move(cells[c]);
    }
    d.features.push_back(std::move(col));
  }

  // Validate records before deriving S so row errors win over S errors.
  for (std::size_t r = 0; r < n; ++r) {
    if (!(d.exposure[r] > 0.0) || !std::isfinite(d.exposure[r])) {
      throw ValidationError(r, fmt::format("exposure must be positive, got {}", d.exposure[r]));
    }
  }

  if (schema.sensitive_column) {
    const auto& name = *schema.sensitive_column;
    auto it = std::find_if(d.features.begin(), d.features.end(),
                           [&](const Column& col) { return col.name == name; });
    if (it == d.features.end()) throw SchemaError(name, "sensitive column is missing");
    const Column& col = *it;
    if (schema.sensitive_kind == SensitiveKind::continuous) {
      if (col.kind != ColumnKind::numeric) {
        throw SchemaError(name, "continuous sensitive feature must be numeric");
      }
      d.sensitive = continuous_sensitive(name, col.numeric);
    } else if (!schema.sensitive_edges.empty()) {
      if (col.kind != ColumnKind::numeric) {
        throw SchemaError(name, "binned sensitive feature must be numeric");
      }
      d.sensitive = categorical_sensitive(name, bin_categorical(col.numeric, schema.sensitive_edges));
    } else if (col.kind == ColumnKind::categorical) {
      d.sensitive = categorical_sensitive(name, col.text);
    } else {
      std::vector<std::string> labels;
      labels.reserve(n);
      for (double v : col.numeric) labels.push_back(fmt::format("{:g}", v));
      d.sensitive = categorical_sensitive(name, labels);
    }
  }
  return Portfolio(std::move(d));
}

Portfolio load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return parse_csv(read_file(path), schema);
}

std::string to_csv(const Portfolio& portfolio) {
  const auto layout = portfolio.layout();
  const auto& roles = portfolio.roles();
  const auto& data = portfolio.data();

  std::string out;
  for (std::size_t c = 0; c < layout.size(); ++c) {
    if (c) out += ',';
    out += quote_if_needed(layout[c]);
  }
  out += '\n';

  // Resolve each layout entry to a cell writer once.
  std::vector<std::function<std::string(std::size_t)>> writers;
  for (const auto& name : layout) {
    if (name == roles.id) {
      writers.emplace_back([&](std::size_t r) { return quote_if_needed(data.ids[r]); });
    } else if (name == roles.claims) {
      writers.emplace_back([&](std::size_t r) { return format_double(data.claims[r]); });
    } else if (name == roles.exposure) {
      writers.emplace_back([&](std::size_t r) { return format_double(data.exposure[r]); });
    } else if (roles.premium && name == *roles.premium) {
      writers.emplace_back([&](std::size_t r) { return format_double((*data.baseline)[r]); });
    } else if (roles.split && name == *roles.split) {
      writers.emplace_back(
          [&](std::size_t r) { return std::string(to_string(portfolio.fold(r))); });
    } else {
      const Column& col = portfolio.feature(name);
      if (col.kind == ColumnKind::numeric) {
        writers.emplace_back([&col](std::size_t r) { return format_double(col.numeric[r]); });
      } else {
        writers.emplace_back([&col](std::size_t r) { return quote_if_needed(col.text[r]); });
      }
    }
  }
  for (std::size_t r = 0; r < portfolio.size(); ++r) {
    for (std::size_t c = 0; c < writers.size(); ++c) {
      if (c) out += ',';
      out += writers[c](r);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Portfolio& portfolio) {
  write_file_atomic(path, to_csv(portfolio));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(fmt::format("failed writing '{}'", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(fmt::format("cannot rename '{}': {}", tmp.string(), ec.message()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace multical
