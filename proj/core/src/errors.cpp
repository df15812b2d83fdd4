#include "fps/errors.hpp"

namespace fps {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kState: return "state";
    case ErrorCategory::kContract: return "contract";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kDivergence: return "divergence";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kConfig: return "config";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kParse: return 3;
    case ErrorCategory::kIo: return 4;
    case ErrorCategory::kContract: return 5;
    case ErrorCategory::kDimension: return 6;
    case ErrorCategory::kState: return 7;
    case ErrorCategory::kNumeric: return 8;
    case ErrorCategory::kDivergence: return 9;
    case ErrorCategory::kData: return 10;
  }
  return 1;
}

}  // namespace fps
