#pragma once

#include <stdexcept>
#include <string>

namespace sdi {

// Malformed input files (EDF bytes, sidecars, checkpoints, CSV tables).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that cannot be used: missing channel, length mismatch,
// too few samples for a statistic.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Divergence, non-convergence, singular systems, complete separation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misuse of an API (shape mismatch, invalid argument values).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sdi
