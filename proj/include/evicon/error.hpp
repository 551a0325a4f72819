#pragma once

#include <stdexcept>
#include <string>

namespace evicon {

/// Raised for contract violations (bad dimensions, invalid arguments,
/// malformed input). `code()` is a short machine-readable tag that the
/// HTTP layer forwards to clients.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace evicon
