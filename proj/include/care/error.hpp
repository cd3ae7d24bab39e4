#pragma once

#include <stdexcept>
#include <string>

namespace care {

/// Base of every error raised by the library. The C API maps each subclass to
/// a status code; see care.h.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (empty reduction,
/// label out of range, singleton class for a metric, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (non-scalar loss, bag update in eval mode).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the offending line when known.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Rethrows the exception currently being handled as the same care::Error
/// subclass with `prefix` prepended to its message. Other exceptions are
/// rethrown unchanged.
[[noreturn]] void rethrow_with_context(const std::string& prefix);

}  // namespace care
