#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lipci {

/// Library error carrying a stable machine-readable code (e.g.
/// "invalid-lipschitz", "singular-gram") next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace detail {

[[noreturn]] inline void fail(const char* code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool ok, const char* code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace detail
}  // namespace lipci
