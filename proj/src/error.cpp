#include "dataprov/error.hpp"

namespace dataprov {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kDomain: return "domain_error";
    case ErrorCode::kInsufficientBatches: return "insufficient_batches";
    case ErrorCode::kZeroVariance: return "zero_variance";
    case ErrorCode::kInvalidLogits: return "invalid_logits";
    case ErrorCode::kZeroVector: return "zero_vector";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kSpecMismatch: return "spec_mismatch";
    case ErrorCode::kMissingClass: return "missing_class";
    case ErrorCode::kNumericalOverflow: return "numerical_overflow";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kQueryFailed: return "query_failed";
    case ErrorCode::kUndefinedF1: return "undefined_f1";
    case ErrorCode::kOneClassOnly: return "one_class_only";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

QueryFailedError::QueryFailedError(std::size_t batch_index, const std::string& cause)
    : Error(ErrorCode::kQueryFailed, "batch " + std::to_string(batch_index) + ": " + cause),
      batch_index_(batch_index) {}

NumericalOverflowError::NumericalOverflowError(std::size_t epoch, const std::string& cause)
    : Error(ErrorCode::kNumericalOverflow, "epoch " + std::to_string(epoch) + ": " + cause),
      epoch_(epoch) {}

}  // namespace dataprov
