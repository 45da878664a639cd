#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stochdom {

/// Distinguishes malformed input from a numerical procedure that could not
/// meet its contract (non-convergence, precondition breach detected late).
enum class ErrorKind { validation, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string reason, const std::string& detail)
      : std::runtime_error(reason + ": " + detail),
        kind_(kind),
        reason_(std::move(reason)),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable code, e.g. "dimension_mismatch".
  const std::string& reason() const noexcept { return reason_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string reason_;
  std::string detail_;
};

[[noreturn]] inline void fail_validation(std::string reason, const std::string& detail) {
  throw Error(ErrorKind::validation, std::move(reason), detail);
}

[[noreturn]] inline void fail_numerical(std::string reason, const std::string& detail) {
  throw Error(ErrorKind::numerical, std::move(reason), detail);
}

template <class Detail>
inline void require(bool condition, const char* reason, const Detail& detail) {
  if (!condition) fail_validation(reason, std::string(detail));
}

}  // namespace stochdom
