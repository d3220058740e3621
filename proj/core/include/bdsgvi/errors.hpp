#pragma once

#include <stdexcept>
#include <string>

namespace bdsgvi {

/// Bad input: violated precondition, malformed configuration, unknown name.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a result (singular system,
/// failed bracket, degenerate flow).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bdsgvi
