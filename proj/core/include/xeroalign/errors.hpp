#pragma once

#include <stdexcept>
#include <string>

namespace xeroalign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation that needs a scalar was handed something else.
class RankError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

// Malformed input data: bad token sequences, invalid BIO, unparsable lines.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration. CLI maps these to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Target-language labels were requested by a mode that must not see them.
class ZeroShotViolation : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace xeroalign
