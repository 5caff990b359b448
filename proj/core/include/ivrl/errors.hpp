#pragma once

#include <stdexcept>
#include <string>

namespace ivrl {

// Base for every error raised by the workbench. Callers that only need to
// report a failure can catch this; the subclasses let the CLI map failures
// onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument violates a documented precondition (non-finite weight,
// out-of-range index, empty list, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A scenario, learner or experiment configuration is unusable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The caller broke a protocol contract, e.g. submitted a masked action.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// NaN or infinity appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public IoError {
 public:
  using IoError::IoError;
};

class VersionMismatch : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace ivrl
