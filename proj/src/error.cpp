#include "apa/error.h"

namespace apa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SilentAudio: return "SilentAudio";
    case ErrorCode::SilentPart: return "SilentPart";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::InfeasibleDerangement: return "InfeasibleDerangement";
    case ErrorCode::CommandFailed: return "CommandFailed";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BridgeError: return "BridgeError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::DegenerateAnchor: return "DegenerateAnchor";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SongTooShort: return "SongTooShort";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NumericalFailure:
    case ErrorCode::DegenerateAnchor:
      return ErrorCategory::Numerical;
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyInput:
      return ErrorCategory::Usage;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace apa
