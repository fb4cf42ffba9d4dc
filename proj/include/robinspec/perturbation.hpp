#pragma once

#include "robinspec/fields.hpp"
#include "robinspec/geometry.hpp"
#include "robinspec/oracle.hpp"
#include "robinspec/spectral.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace robinspec {

/// omega(t) = base + t * direction, with the direction supported in the patch.
struct ImpedancePath {
  BoundaryField base;
  BoundaryField direction;

  BoundaryField at(double t) const { return base + t * direction; }
};

/// -sum |trace|^2 * direction * w_S: the first-order change of a simple
/// eigenvalue along `direction` for an M-normalised eigenvector.
double gateaux_exact(const BoundaryField& trace, const BoundaryField& direction,
                     const BoundaryMesh& metric_bmesh);

/// 1e-4 (1 + ||base||_inf) / ||direction||_inf.
double default_fd_step(const BoundaryField& base, const BoundaryField& direction);

struct FdEstimate {
  double estimate = 0.0;         // central difference with step h
  double error_indicator = 0.0;  // 4/3 |D_h - D_{h/2}|
  double step = 0.0;
};

/// Central-difference derivative of eigenvalue `index` (0-based) along the
/// path, from oracle queries only. Throws MultiplicityError when the
/// eigenvalue is within gap_tol of a neighbour at any query point. A step of
/// zero selects default_fd_step.
FdEstimate gateaux_fd(SpectralOracle& oracle, const BoundaryField& base,
                      const BoundaryField& direction, int index, double step = 0.0,
                      double gap_tol = kDefaultGapTol);

/// Fills entries (rows = eigen-indices, cols = directions) of the derivative table.
struct GateauxTable {
  Eigen::MatrixXd values;
  Eigen::MatrixXd error;
  Eigen::MatrixXd step;
};

struct HadamardEntry {
  int index = 0;      // 0-based eigen-index
  int direction = 0;  // 0-based bump index
  double exact = 0.0;
  double fd = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double error_indicator = 0.0;
  std::string status;  // "ok", "flagged", "skipped", "multiplicity"
};

struct HadamardReport {
  std::vector<HadamardEntry> entries;
  double max_rel_error = 0.0;
  int flagged = 0;
  int multiplicity = 0;
};

/// Compares finite-difference derivatives from the oracle against the
/// trace formula evaluated on `eigsys` (computed at `base`). Entries with
/// |exact| below 1e-10 are skipped; MultiplicityError is recorded per entry.
HadamardReport hadamard_check(const EigenSystem& eigsys, const BoundaryMesh& metric_bmesh,
                              SpectralOracle& oracle, const BoundaryField& base,
                              const std::vector<BoundaryField>& directions, int max_index,
                              double step = 0.0, double tolerance = 1e-4,
                              double gap_tol = kDefaultGapTol);

struct LockedGap {
  int index = 0;   // pair (index, index + 1), 0-based
  double gap = 0;  // gap when locked
  int stage = 0;
};

struct StageRecord {
  int stage = 0;  // 1-based
  int index = 0;  // eigenvalue made simple at this stage (0-based)
  int trials = 0; // 0 when accepted without perturbing
  double amplitude = 0.0;
  double floor_factor = 0.0;  // 1/2 - 2^-stage
  std::vector<LockedGap> locked;      // pairs locked before this stage
  std::vector<double> gaps_at_accept; // current gap of each locked pair
};

struct SimplifyResult {
  BoundaryField omega;
  Eigen::VectorXd eigenvalues;
  std::vector<StageRecord> stages;
  std::vector<LockedGap> locked;
  double distance = 0.0;  // ||omega - omega_0||_inf
  bool unperturbed = false;
};

struct SimplifyOptions {
  int k_max = 6;
  double epsilon = 0.1;
  std::uint64_t seed = 1;
  int budget = 50;
  double gap_tol = kDefaultGapTol;
};

/// Staged random search for an impedance in the epsilon-ball around omega_0
/// (perturbation supported in the patch) with lambda_1..lambda_kmax simple.
/// Stage s perturbs with amplitude epsilon / (k_max 2^s) and keeps every
/// previously locked gap above (1/2 - 2^-s) times its locked value.
SimplifyResult simplify_spectrum(SpectralOracle& oracle, const BoundaryField& omega0,
                                 const BoundaryMesh& bmesh, const SigmaPatch& sigma,
                                 const SimplifyOptions& options);

}  // namespace robinspec
