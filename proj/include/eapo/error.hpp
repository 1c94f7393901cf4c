#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eapo {

// Every failure surfaced by the library carries one of these codes; the C API
// maps them one-to-one onto eapo_status.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIndexOutOfRange,
  kBadDistribution,
  kNonAbsorbingTerminal,
  kBadSize,
  kActionOutOfRange,
  kStateSpaceTooLarge,
  kSingularSystem,
  kShapeMismatch,
  kNoCachedForward,
  kSliceMismatch,
  kNonFiniteRatio,
  kNonFiniteLoss,
  kIncompleteEpisode,
  kParse,
  kIo,
  kConfig,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace eapo
