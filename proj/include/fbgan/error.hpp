#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fbgan {

enum class ErrorCategory {
  validation,
  storage,
  format,
  corruption,
  shape,
  numeric,
  divergence,
  configuration,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::storage: return "storage";
    case ErrorCategory::format: return "format";
    case ErrorCategory::corruption: return "corruption";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::divergence: return "divergence";
    case ErrorCategory::configuration: return "configuration";
  }
  return "unknown";
}

/// Base of every error the toolkit raises. The category drives CLI exit
/// messages; the message carries the specifics (path, term, step, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

template <ErrorCategory C>
class CategorizedError : public Error {
 public:
  explicit CategorizedError(const std::string& what) : Error(C, what) {}
};

using ValidationError = CategorizedError<ErrorCategory::validation>;
using StorageError = CategorizedError<ErrorCategory::storage>;
using FormatError = CategorizedError<ErrorCategory::format>;
using CorruptionError = CategorizedError<ErrorCategory::corruption>;
using ShapeError = CategorizedError<ErrorCategory::shape>;
using NumericError = CategorizedError<ErrorCategory::numeric>;
using DivergenceError = CategorizedError<ErrorCategory::divergence>;
using ConfigurationError = CategorizedError<ErrorCategory::configuration>;

}  // namespace fbgan
