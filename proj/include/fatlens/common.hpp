#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fatlens {

enum class ErrorKind {
  invalid_argument,
  data,
  config,
  missing_artifact,
  io,
  network,
};

// All library failures are reported through this exception; the C layer maps
// the kind onto a status code.
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

inline constexpr const char* kVersion = "0.3.1";

}  // namespace fatlens
