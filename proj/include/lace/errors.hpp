#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lace {

// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument: wrong shape, out-of-domain value, malformed expression.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Labels or data values outside their declared domain.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered, divergence, step-size underflow.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Adaptive solver step fell below the minimum step size.
class StiffnessError : public NumericError {
 public:
  StiffnessError(const std::string& what, double t) : NumericError(what), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

// Operation is well-defined but not supported for this input (e.g. rejection
// sampling a negation, grid oracle above two latent dimensions).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint or other persisted file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (unknown key, bad value, unresolved path).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Expression text failed to parse. `position` is the 0-based character offset.
class ParseError : public ArgumentError {
 public:
  ParseError(const std::string& message, std::size_t position)
      : ArgumentError(message + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace lace
