#pragma once

#include <stdexcept>
#include <string>

namespace handtwin {

/// Base class for every error raised by the library.
class HandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON, CSV, landmark records).
class ParseError : public HandError {
 public:
  using HandError::HandError;
};

/// Input parsed but violates a model or type invariant. `field()` names the offender.
class ValidationError : public HandError {
 public:
  ValidationError(std::string field, const std::string& what)
      : HandError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public HandError {
 public:
  using HandError::HandError;
};

class IoError : public HandError {
 public:
  using HandError::HandError;
};

}  // namespace handtwin
