#include "eapo/error.hpp"

namespace eapo {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kBadDistribution: return "BadDistribution";
    case ErrorCode::kNonAbsorbingTerminal: return "NonAbsorbingTerminal";
    case ErrorCode::kBadSize: return "BadSize";
    case ErrorCode::kActionOutOfRange: return "ActionOutOfRange";
    case ErrorCode::kStateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNoCachedForward: return "NoCachedForward";
    case ErrorCode::kSliceMismatch: return "SliceMismatch";
    case ErrorCode::kNonFiniteRatio: return "NonFiniteRatio";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kIncompleteEpisode: return "IncompleteEpisode";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

}  // namespace eapo
