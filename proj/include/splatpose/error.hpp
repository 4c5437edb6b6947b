#pragma once

#include <stdexcept>
#include <string>

namespace splatpose {

enum class ErrorCode {
  kFormat,
  kEmptyScene,
  kInvalidDepth,
  kDegenerateConfiguration,
  kAmbiguousOrientation,
  kInsufficientMatches,
  kPnpFailed,
  kDimensionMismatch,
  kInvalidArgument,
  kIo,
  kNonFinite,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// PnP failure keeps the best inlier count seen so callers can report it.
class PnpError : public Error {
 public:
  PnpError(const std::string& what, int best_inlier_count)
      : Error(ErrorCode::kPnpFailed, what),
        best_inlier_count_(best_inlier_count) {}
  int best_inlier_count() const { return best_inlier_count_; }

 private:
  int best_inlier_count_;
};

}  // namespace splatpose
