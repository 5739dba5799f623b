#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dataprov {

enum class ErrorCode {
  kDomain,
  kInsufficientBatches,
  kZeroVariance,
  kInvalidLogits,
  kZeroVector,
  kDimensionMismatch,
  kSpecMismatch,
  kMissingClass,
  kNumericalOverflow,
  kTransport,
  kQueryFailed,
  kUndefinedF1,
  kOneClassOnly,
  kEmptyInput,
  kInvalidConfig,
  kIo,
  kParse,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class QueryFailedError : public Error {
 public:
  QueryFailedError(std::size_t batch_index, const std::string& cause);

  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class NumericalOverflowError : public Error {
 public:
  NumericalOverflowError(std::size_t epoch, const std::string& cause);

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace dataprov
