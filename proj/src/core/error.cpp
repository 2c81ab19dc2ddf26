#include "hugsim/core/error.hpp"

namespace hugsim {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kMissingAsset: return "missing_asset";
    case ErrorCode::kBadContainer: return "bad_container";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kInvariantViolation: return "invariant_violation";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kStalePlan: return "stale_plan";
    case ErrorCode::kEpisodeDone: return "episode_done";
    case ErrorCode::kProtocol: return "protocol";
  }
  return "unknown";
}

}  // namespace hugsim
