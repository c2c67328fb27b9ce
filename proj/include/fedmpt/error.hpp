#pragma once

#include <stdexcept>
#include <string>

namespace fedmpt {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Hyperparameter outside its domain (temperature <= 0, lr <= 0, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown (underflowed kernel, non-finite scaling).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Mismatched parameter bundles exchanged between client and server.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedmpt
