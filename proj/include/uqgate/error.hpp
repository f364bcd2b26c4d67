#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace uqgate {

enum class ErrorCode {
  // core
  EmptyAnswer,
  NoNumberFound,
  AmbiguousYesNo,
  InvalidRecord,
  // vce
  MissingConfidence,
  AllFiltered,
  AllZeroConfidence,
  // msp / cocoa
  EmptyLogprobs,
  PositiveLogprob,
  TooFewValues,
  MissingLogprobs,
  MissingStats,
  TooFewAlternatives,
  // similarity
  BackendUnavailable,
  BatchShapeMismatch,
  SidecarDown,
  ScoreOutOfRange,
  InvalidRequest,
  // metrics
  EmptyInput,
  // orchestrator
  TransportError,
  RateLimited,
  ApiError,
  MultiCompletionRejected,
  PersistentFailure,
  MissingPromptTemplate,
  CacheCorrupt,
  CacheConflict,
  // datasets / cli
  SchemaMismatch,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Server-requested wait for RateLimited, in seconds.
  std::optional<double> retry_after;

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

}  // namespace uqgate
