#pragma once

#include <stdexcept>
#include <string>

namespace gano {

// Bad input, configuration, or shape. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Divergence, non-finite values, singular systems. The CLI maps this to exit
// code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gano
