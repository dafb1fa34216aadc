// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace emert {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
struct DimensionError : Error {
  using Error::Error;
};
// Out-of-domain argument (negative lambda, bad priors, k > n, ...).
struct ParameterError : Error {
  using Error::Error;
};
// Caller broke a documented precondition (non-scalar loss, ...).
struct ContractError : Error {
  using Error::Error;
};
// Inconsistent model or experiment configuration. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};
// Malformed or unreadable input data. CLI exit code 3.
struct DataError : Error {
  using Error::Error;
};
// Well-formed data whose values violate a domain bound. CLI exit code 3.
struct ValidationError : DataError {
  using DataError::DataError;
};
// NaN/Inf produced by a computation.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace emert
