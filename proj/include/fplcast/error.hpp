#pragma once

#include <stdexcept>
#include <string>

namespace fplcast {

// Every failure raised by the library carries a machine-readable category so
// the CLI can map it onto an exit status.
enum class ErrorCategory {
  kSchema,
  kParse,
  kLookup,
  kArgument,
  kShape,
  kBudget,
  kConfig,
  kNumeric,
  kIo,
};

const char* category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message)
      : Error(ErrorCategory::kSchema, message) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error(ErrorCategory::kParse,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& message)
      : Error(ErrorCategory::kLookup, message) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& message)
      : Error(ErrorCategory::kArgument, message) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message)
      : Error(ErrorCategory::kShape, message) {}
};

class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& message)
      : Error(ErrorCategory::kBudget, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCategory::kConfig, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message)
      : Error(ErrorCategory::kNumeric, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorCategory::kIo, message) {}
};

// Non-fatal diagnostics go to stderr unless silenced (tests silence them).
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace fplcast
