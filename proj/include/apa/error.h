/// @file error.h
/// @brief Error codes and the exception type thrown throughout the library.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace apa {

enum class ErrorCode {
  // audio-io
  UnsupportedFormat,
  CorruptFile,
  OutOfRange,
  IoError,
  // dynamics
  SilentAudio,
  SilentPart,
  TooShort,
  // perturb
  TooFewPairs,
  InfeasibleDerangement,
  CommandFailed,
  LengthMismatch,
  // embed
  BridgeError,
  DimensionMismatch,
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  // stats
  TooFewSamples,
  NumericalFailure,
  DegenerateAnchor,
  EmptyInput,
  // pipeline
  SongTooShort,
  InvalidManifest,
  InvalidArgument,
};

/// @brief Coarse grouping used to map errors onto CLI exit codes.
enum class ErrorCategory { Usage, Data, Numerical };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace apa
