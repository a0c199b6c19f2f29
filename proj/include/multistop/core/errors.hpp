#pragma once

#include <stdexcept>
#include <string>

namespace multistop {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: malformed model files, bad arguments, violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A query outside the domain on which an object is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical engine did not reach its tolerance or hit an inconsistent state.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature could not meet the requested tolerance.
class QuadratureError : public SolverError {
 public:
  QuadratureError(const std::string& what, double achieved)
      : SolverError(what + " (achieved error estimate " + std::to_string(achieved) + ")"),
        achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

}  // namespace multistop
