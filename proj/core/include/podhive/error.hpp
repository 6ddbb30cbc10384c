#pragma once

#include <stdexcept>
#include <string>

namespace podhive {

/// Base exception for every module. `code()` is a stable machine-readable
/// identifier (e.g. "ParentIsPod", "UndefinedName") that the HTTP layer and
/// the CLI surface verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace podhive
