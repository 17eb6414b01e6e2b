#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rsde {

// Runtime failure carrying a stable machine-readable code alongside the message.
class error : public std::runtime_error {
public:
  error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& what) {
  throw error(std::move(code), what);
}

}  // namespace rsde
