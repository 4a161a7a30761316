#pragma once

#include <stdexcept>
#include <string>

namespace jiio {

enum class ErrorCode {
  kSingularMatrix,
  kNoConvergence,
  kDimensionMismatch,
  kDimensionTooLarge,
  kNonFinite,
  kZeroWeight,
  kDegenerateFit,
  kInvalidArgument,
  kParseError,
  kUnknownKey,
  kMissingKey,
  kBadMagic,
  kTruncatedFile,
  kCorruptFooter,
  kIoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSingularMatrix: return "SingularMatrix";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kZeroWeight: return "ZeroWeight";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kMissingKey: return "MissingKey";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kCorruptFooter: return "CorruptFooter";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Numerical failures as opposed to usage/configuration/IO failures.
  bool numerical() const noexcept {
    return code_ == ErrorCode::kSingularMatrix || code_ == ErrorCode::kNoConvergence ||
           code_ == ErrorCode::kNonFinite || code_ == ErrorCode::kDegenerateFit;
  }

 private:
  ErrorCode code_;
};

/// Parse failures additionally report the offending (1-based) line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace jiio
