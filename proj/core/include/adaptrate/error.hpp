#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace adaptrate {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NegativeRate,
  NonFinite,
  ConvergenceFailure,
  ImpossibleObservation,
  NotFound,
  InvalidState,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. The code is stable and machine readable; the
/// session service maps it onto HTTP status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const char* message) {
  if (!condition) fail(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

/// Overload for messages that are costly to build: `message` is only
/// invoked on failure.
template <typename MessageFn>
  requires std::is_invocable_r_v<std::string, MessageFn>
inline void require(bool condition, ErrorCode code, MessageFn&& message) {
  if (!condition) fail(code, message());
}

}  // namespace adaptrate
