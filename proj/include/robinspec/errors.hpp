#pragma once

#include <exception>
#include <stdexcept>
#include <string>

namespace robinspec {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (bad grid size, nonpositive metric, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A caller broke an operation's precondition (length mismatch, bad index).
class ContractError : public Error {
public:
  using Error::Error;
};

class PatchTooSmallError : public Error {
public:
  using Error::Error;
};

/// Eigensolver did not converge; carries the worst residual seen.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double worst_residual)
      : Error(what), worst_residual_(worst_residual) {}
  double worst_residual() const noexcept { return worst_residual_; }

private:
  double worst_residual_;
};

/// An eigenvalue sits on (or too close to) a Riesz contour.
class ContourError : public Error {
public:
  using Error::Error;
};

/// The projected vector vanished: the disk no longer isolates the branch.
class BranchLossError : public Error {
public:
  using Error::Error;
};

/// The requested eigenvalue is not simple at some query point.
class MultiplicityError : public Error {
public:
  MultiplicityError(const std::string& what, int index)
      : Error(what), index_(index) {}
  int index() const noexcept { return index_; }

private:
  int index_;
};

/// Spectrum simplification ran out of trials.
class SearchFailure : public Error {
public:
  SearchFailure(const std::string& what, int index) : Error(what), index_(index) {}
  int index() const noexcept { return index_; }

private:
  int index_;
};

/// Bump basis is rank deficient or otherwise unusable.
class BasisError : public Error {
public:
  using Error::Error;
};

/// A degenerate cluster failed to split along the chosen direction.
class SplittingError : public Error {
public:
  using Error::Error;
};

class NonConvergenceError : public Error {
public:
  using Error::Error;
};

/// Vanishing order at a zero band could not be classified.
class OrderAmbiguityError : public Error {
public:
  OrderAmbiguityError(const std::string& what, int band) : Error(what), band_(band) {}
  int band() const noexcept { return band_; }

private:
  int band_;
};

/// Replay oracle has no record for a queried impedance.
class MissingQueryError : public Error {
public:
  using Error::Error;
};

/// Short class name of a library error ("SolverError", ...), for reports.
inline std::string error_name(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
  if (dynamic_cast<const PatchTooSmallError*>(&e)) return "PatchTooSmallError";
  if (dynamic_cast<const SolverError*>(&e)) return "SolverError";
  if (dynamic_cast<const ContourError*>(&e)) return "ContourError";
  if (dynamic_cast<const BranchLossError*>(&e)) return "BranchLossError";
  if (dynamic_cast<const MultiplicityError*>(&e)) return "MultiplicityError";
  if (dynamic_cast<const SearchFailure*>(&e)) return "SearchFailure";
  if (dynamic_cast<const BasisError*>(&e)) return "BasisError";
  if (dynamic_cast<const SplittingError*>(&e)) return "SplittingError";
  if (dynamic_cast<const NonConvergenceError*>(&e)) return "NonConvergenceError";
  if (dynamic_cast<const OrderAmbiguityError*>(&e)) return "OrderAmbiguityError";
  if (dynamic_cast<const MissingQueryError*>(&e)) return "MissingQueryError";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "std::exception";
}

}  // namespace robinspec
