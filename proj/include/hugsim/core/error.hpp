#pragma once

#include <stdexcept>
#include <string>

namespace hugsim {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kMissingAsset,
  kBadContainer,
  kVersionMismatch,
  kTruncated,
  kInvariantViolation,
  kIo,
  kConfig,
  kNonFinite,
  kDiverged,
  kStalePlan,
  kEpisodeDone,
  kProtocol,
};

const char* to_string(ErrorCode code);

// Every failure surfaced by the library carries a machine-readable code so
// callers (CLI, bridge) can map it onto exit status or ERROR frames.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace hugsim
