#pragma once

#include <stdexcept>
#include <string>

namespace rsclust {

enum class ErrorKind {
  invalid_input,
  invalid_hyperparameter,
  resource_limit,
  optimization_failure,
  insufficient_regeneration,
  insufficient_states,
  io_error,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace rsclust
