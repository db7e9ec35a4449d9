#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rfvm {

/// Failure categories. The CLI maps each one to a fixed exit code.
enum class ErrorCategory { usage, io, data, shape, model, numeric };

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::io: return "io";
    case ErrorCategory::data: return "data";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::model: return "model";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return 1;
    case ErrorCategory::io: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::shape: return 4;
    case ErrorCategory::model: return 5;
    case ErrorCategory::numeric: return 9;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// A distribution or hyperparameter outside its valid domain.
class InvalidParameter : public Error {
 public:
  explicit InvalidParameter(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

/// Argument outside the support of a density.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

/// Data that cannot be fitted or parsed (single class, bad labels, bad cells).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& what)
      : DataError(what), row_(row), col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_, col_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::shape, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

class ModelFormatError : public Error {
 public:
  explicit ModelFormatError(const std::string& what) : Error(ErrorCategory::model, what) {}
};

/// Factorization failure or a non-finite quantity inside the inference loop.
class NumericalBreakdown : public Error {
 public:
  NumericalBreakdown(const std::string& what, long iteration = -1)
      : Error(ErrorCategory::numeric,
              iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")" : what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace rfvm
