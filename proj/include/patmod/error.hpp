#pragma once

#include <stdexcept>
#include <string>

namespace patmod {

/// Root of every error thrown by the library. The CLI maps subclasses onto
/// process exit codes (see cli/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (empty cloud,
/// empty reduction, k > n, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (non-scalar loss, mismatched grids, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace patmod
