#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace farmhazard {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data, schema or configuration. The CLI maps this to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (divergence, singular systems, non-finite scores).
/// The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kVersion = "1.0.0";

}  // namespace farmhazard
