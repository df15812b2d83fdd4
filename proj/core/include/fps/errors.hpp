#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fps {

// Machine-readable error categories. The CLI maps each to a distinct exit code.
enum class ErrorCategory {
  kDimension,
  kState,
  kContract,
  kNumeric,
  kDivergence,
  kData,
  kParse,
  kIo,
  kConfig,
};

std::string_view category_name(ErrorCategory category);
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Shape mismatch between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorCategory::kDimension, what) {}
};

// Operation invoked in the wrong grad-mode / tape state.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what)
      : Error(ErrorCategory::kState, what) {}
};

// Violated precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorCategory::kContract, what) {}
};

// An op produced NaN or Inf.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::kNumeric, what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(ErrorCategory::kDivergence, what), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorCategory::kData, what) {}
};

// Malformed input file; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(ErrorCategory::kParse,
              what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::kConfig, what) {}
};

}  // namespace fps
