#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace proxbundle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, duplicate ids, non-finite input.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A prune policy cannot honour the mandatory retention set.
class PolicyInfeasible : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Problem document could not be parsed. `where()` is a JSON pointer or a
/// byte offset, whichever the failure could be attributed to.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string where)
      : Error(what + " (at " + where + ")"), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// An iterative inner procedure ran out of budget. Carries the best point
/// found and the residual it achieved.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, Vector best, double residual)
      : Error(what), best_(std::move(best)), residual_(residual) {}

  const Vector& best() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Vector best_;
  double residual_;
};

namespace detail {

inline void require_dim(const Vector& x, Eigen::Index n, const char* what) {
  if (x.size() != n) {
    throw InvalidInput(std::string(what) + ": expected dimension " + std::to_string(n) +
                       ", got " + std::to_string(x.size()));
  }
}

inline bool all_finite(const Vector& x) { return x.allFinite(); }

}  // namespace detail
}  // namespace proxbundle
