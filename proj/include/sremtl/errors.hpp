#pragma once

#include <stdexcept>
#include <string>

namespace sremtl {

// Tensor shapes that do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an operation's precondition (non-scalar loss, reused graph,
// label out of range, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Out-of-range hyperparameter or dataset specification.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed external file (WAV, checkpoint, trial list, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN or Inf showed up in a loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sremtl
