#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace oifc {

// Base for all typed errors thrown by the toolkit. `code()` is a stable,
// machine-readable tag (e.g. "MissingSection"); what() carries the human
// message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace oifc
