#pragma once

#include <stdexcept>
#include <string>

namespace jsqr {

// Invalid argument or parameter outside its support.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A computation that should have succeeded did not (factorization failure,
// negative variance beyond tolerance, broken non-crossing invariant).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameters whose quantile curves are strictly increasing in exact
// arithmetic but not in double precision: neighbouring grid levels would
// round to the same value. Such curves are refused rather than returned with
// ties.
class ResolutionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Malformed input file or configuration. The message names the offending
// line or key.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jsqr
