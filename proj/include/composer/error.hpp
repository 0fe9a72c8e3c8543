// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace composer {

enum class ErrorCode {
  kDuplicateKind,
  kUnknownKind,
  kBadPath,
  kTypeMismatch,
  kUnknownFactory,
  kUnknownFunction,
  kUnset,
  kResolve,
  kMalformedGolden,
  kShape,
  kNoContext,
  kUnknownActivation,
  kOddDim,
  kBadK,
  kIndivisible,
  kMultipleWildcards,
  kInvalidArgument,
  kNoMatch,
  kUnknownTag,
  kOom,
  kUnknownInstance,
  kShortTrace,
  kUnknownExperiment,
  kMutatedCode,
  kBrokenConfig,
  kIo,
};

inline constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDuplicateKind: return "E_DUPLICATE_KIND";
    case ErrorCode::kUnknownKind: return "E_UNKNOWN_KIND";
    case ErrorCode::kBadPath: return "E_BAD_PATH";
    case ErrorCode::kTypeMismatch: return "E_TYPE_MISMATCH";
    case ErrorCode::kUnknownFactory: return "E_UNKNOWN_FACTORY";
    case ErrorCode::kUnknownFunction: return "E_UNKNOWN_FUNCTION";
    case ErrorCode::kUnset: return "E_UNSET";
    case ErrorCode::kResolve: return "E_RESOLVE";
    case ErrorCode::kMalformedGolden: return "E_MALFORMED_GOLDEN";
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kNoContext: return "E_NO_CONTEXT";
    case ErrorCode::kUnknownActivation: return "E_UNKNOWN_ACTIVATION";
    case ErrorCode::kOddDim: return "E_ODD_DIM";
    case ErrorCode::kBadK: return "E_BAD_K";
    case ErrorCode::kIndivisible: return "E_INDIVISIBLE";
    case ErrorCode::kMultipleWildcards: return "E_MULTIPLE_WILDCARDS";
    case ErrorCode::kInvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::kNoMatch: return "E_NO_MATCH";
    case ErrorCode::kUnknownTag: return "E_UNKNOWN_TAG";
    case ErrorCode::kOom: return "E_OOM";
    case ErrorCode::kUnknownInstance: return "E_UNKNOWN_INSTANCE";
    case ErrorCode::kShortTrace: return "E_SHORT_TRACE";
    case ErrorCode::kUnknownExperiment: return "E_UNKNOWN_EXPERIMENT";
    case ErrorCode::kMutatedCode: return "E_MUTATED_CODE";
    case ErrorCode::kBrokenConfig: return "E_BROKEN_CONFIG";
    case ErrorCode::kIo: return "E_IO";
  }
  return "E_UNKNOWN";
}

/// Exception carrying a stable error code. `subject()` holds the offending
/// path, kind or name when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string subject, const std::string& detail = {})
      : std::runtime_error(format(code, subject, detail)),
        code_(code),
        subject_(std::move(subject)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  static std::string format(ErrorCode code, const std::string& subject,
                            const std::string& detail) {
    std::string out(error_code_name(code));
    if (!subject.empty()) out += "(" + subject + ")";
    if (!detail.empty()) out += ": " + detail;
    return out;
  }

  ErrorCode code_;
  std::string subject_;
};

}  // namespace composer
