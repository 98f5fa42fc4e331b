#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kfp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was not met (dimension mismatch, t < 0, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// No certificate can be produced for the given inputs.
class CertificationInfeasible : public Error {
 public:
  using Error::Error;
};

/// Precondition of a formula fails (e.g. the operator-norm Poincare constant with ||P_t0 - mu|| >= 1).
class Inapplicable : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed; carries the residual or Rayleigh-quotient history.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Truncated domain does not contain the effective support of the solution.
class GridTooSmall : public Error {
 public:
  using Error::Error;
};

class CflViolation : public Error {
 public:
  CflViolation(const std::string& what, double suggested_dt)
      : Error(what), suggested_dt_(suggested_dt) {}
  double suggested_dt() const noexcept { return suggested_dt_; }

 private:
  double suggested_dt_;
};

/// Trajectory left the |z| <= 1e8 ball.
class Divergence : public Error {
 public:
  using Error::Error;
};

/// Trace data contradicts a structural property it must satisfy.
class DataQualityError : public Error {
 public:
  using Error::Error;
};

}  // namespace kfp
