#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pgsmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Bad user input: malformed files, inconsistent configuration, invalid
// arguments. The CLI maps these to its input-error exit code.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure could not produce a usable answer (singular system,
// saturated GCV denominator, non-finite iterate).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pgsmm
