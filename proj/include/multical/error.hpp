#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace multical {

// Base class of every error raised by the library. The CLI maps the
// validation-type errors (schema, row, config) to exit code 1 and everything
// else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required column is missing or a column has the wrong kind.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& column, const std::string& what)
      : Error("column '" + column + "': " + what), column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

// Invalid input values. `row()` is set for row-level problems in a CSV file
// (0-based data row, header excluded).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
  ValidationError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::optional<std::size_t> row() const { return row_; }

 private:
  std::optional<std::size_t> row_;
};

// Invalid algorithm parameters or flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mathematical domain violations (empty samples, non-positive premiums, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Numerical procedure failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace multical
