#pragma once

#include <stdexcept>
#include <string>

namespace tapermode {

// Base of every error thrown by the library. The category maps onto the CLI
// exit codes (config = 2, solver = 3, fit = 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

// Two ions at the same position: the Coulomb term is singular.
class CoincidentIonsError : public SolverError {
 public:
  using SolverError::SolverError;
};

// An ion sits where the funnel factor 1 + 2z/l0 is not positive.
class DomainError : public SolverError {
 public:
  using SolverError::SolverError;
};

class NonConvergenceError : public SolverError {
 public:
  using SolverError::SolverError;
};

// Radial or axial Hessian is not positive definite.
class InstabilityError : public SolverError {
 public:
  using SolverError::SolverError;
};

// Fewer resolvable maxima in a spectrum than requested peaks.
class PeakDetectionError : public FitError {
 public:
  PeakDetectionError(const std::string& what, int found)
      : FitError(what), found_(found) {}
  int found() const noexcept { return found_; }

 private:
  int found_;
};

}  // namespace tapermode
