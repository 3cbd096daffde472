#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stochinv {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on an argument or a data structure was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-SPD factorization, divergent iteration, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable persisted artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Error tagged with the pipeline stage that produced it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace stochinv
