#pragma once

#include <stdexcept>
#include <string>

namespace ccfg {

/// Coarse failure classes; the CLI maps each to its own exit code.
enum class ErrorCategory { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Invalid argument or configuration value.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

/// Shapes that do not agree or cannot be divided as required.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorCategory::data, what) {}
};

/// Malformed on-disk data (manifest, payload, checkpoint).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ErrorCategory::data, what) {}
};

/// Singular matrices, diverging losses, non-finite values.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::numeric, what) {}
};

const char* category_name(ErrorCategory category) noexcept;

}  // namespace ccfg
