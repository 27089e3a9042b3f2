#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace stackprice {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: wrong shapes, violated type invariants, bad options.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A feasible set (polytope, LP, bilevel program) turned out to be empty.
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// An optimization problem has no finite optimum in some direction.
class Unbounded : public Error {
 public:
  using Error::Error;
};

/// An iterative method stopped without meeting its tolerance.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace stackprice
