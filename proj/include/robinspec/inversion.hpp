#pragma once

#include "robinspec/fields.hpp"
#include "robinspec/geometry.hpp"
#include "robinspec/oracle.hpp"
#include "robinspec/spectral.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace robinspec {

// ---------------------------------------------------------------------------
// Trace magnitudes from eigenvalue derivatives
// ---------------------------------------------------------------------------

struct MagnitudeOptions {
  double step = 0.0;  // FD step; 0 selects default_fd_step per direction
  double reg = -1.0;  // Tikhonov weight; negative selects 1e-8 * ||D||
  double gap_tol = kDefaultGapTol;
  double zero_moment_tol = 1e-12;  // ||D|| below this is a resolution failure
};

/// rho = |phi_k|^2 at the patch nodes, recovered from the moments
/// D_j = d lambda_k (omega_j) = -sum omega_j rho w_S.
struct TraceMagnitude {
  int index = 0;               // 0-based eigen-index
  Eigen::VectorXd rho;         // clipped, patch order
  Eigen::VectorXd moments;     // D_j from the oracle
  Eigen::VectorXd moment_error;  // Richardson indicators
  double reg = 0.0;
  double residual = 0.0;       // ||G rho_raw + D|| / ||D||
  double clipped_mass = 0.0;   // sum |negative part| w / sum |rho_raw| w
  bool resolution_failure = false;

  /// sqrt(rho), the recovered |phi_k| on the patch.
  Eigen::VectorXd magnitude() const { return rho.cwiseSqrt(); }
};

/// Regularised moment inversion for a simple eigenvalue at `omega0`. The
/// metric boundary supplies w_S on the patch. Propagates MultiplicityError.
TraceMagnitude recover_trace_magnitude(SpectralOracle& oracle, const BoundaryField& omega0,
                                       int index, const BumpBasis& bumps,
                                       const BoundaryMesh& metric_bmesh,
                                       const SigmaPatch& sigma,
                                       const MagnitudeOptions& options = {});

// ---------------------------------------------------------------------------
// Degenerate clusters
// ---------------------------------------------------------------------------

struct ClusterOptions {
  double tol = 3e-3;  // Cauchy tolerance on relative L2(Sigma) change of |phi|
  /// FD step at omega_n is capped at this fraction of the smallest member gap.
  double fd_gap_fraction = 1e-2;
};

/// s_n = s0 2^-n, n = 0..steps-1.
std::vector<double> halving_schedule(double s0, int steps);

struct ClusterRecovery {
  Cluster cluster;
  std::vector<TraceMagnitude> members;  // one per cluster index, ascending order
  std::vector<double> schedule;         // s values actually used
  std::vector<double> history;          // max relative change after each step >= 1
  std::vector<double> min_gap;          // smallest member gap at each omega_n
  bool converged = false;
};

/// Recovers the limit magnitudes of a cluster along omega_n = omega0 + s_n eta.
/// A singleton cluster reduces to recover_trace_magnitude at omega0.
ClusterRecovery recover_cluster_traces(SpectralOracle& oracle, const BoundaryField& omega0,
                                       const Cluster& cluster, const BoundaryField& eta,
                                       const std::vector<double>& schedule,
                                       const BumpBasis& bumps, const BoundaryMesh& metric_bmesh,
                                       const SigmaPatch& sigma,
                                       const MagnitudeOptions& magnitude = {},
                                       const ClusterOptions& options = {});

/// Default splitting direction: smooth bump centred on the patch, half-width
/// 0.35 of its span, peak 1.
BoundaryField default_splitting_direction(const BoundaryMesh& bmesh, const SigmaPatch& sigma);

// ---------------------------------------------------------------------------
// Sign continuation
// ---------------------------------------------------------------------------

struct SignOptions {
  double zero_tol = 1e-6;  // zero band: xi < zero_tol * max xi
  int fit_window = 5;      // nodes per side in the log-log fit
  double dip_tol = 0.05;   // isolated local minima below dip_tol * max xi are examined too
  double order_tol = 0.25; // |m - round(m)| allowed per side
};

/// A candidate zero of the trace between patch positions first..last.
struct ZeroBand {
  int first = 0;
  int last = 0;
  bool dip = false;         // local minimum rather than a sub-threshold run
  double root = 0.0;        // fitted root location (arc coordinate)
  double order_left = 0.0;  // log-log slopes
  double order_right = 0.0;
  int order = 0;            // rounded average; 0 means "not a zero"
  bool flip = false;
};

struct SignRecovery {
  Eigen::VectorXd values;  // psi, |psi| = xi, psi(anchor) > 0
  int anchor = 0;
  std::vector<ZeroBand> bands;
};

/// Sign continuation along a connected arc: anchor at argmax xi,
/// flip the sign across every zero of odd vanishing order. Throws
/// OrderAmbiguityError when a zero cannot be classified.
SignRecovery recover_sign(const Eigen::VectorXd& xi, const Eigen::VectorXd& arc,
                          const SignOptions& options = {});

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct BsdEntry {
  int index = 0;  // 0-based
  double eigenvalue = 0.0;
  Eigen::VectorXd trace;      // signed trace on the patch (empty on failure)
  Eigen::VectorXd magnitude;  // sqrt(rho)
  bool sign_ambiguous = true;
  std::string status = "ok";  // "ok" or the error class
  std::string error;
  std::string provenance;     // "simple" or "cluster"
  int cluster_first = 0;
  int cluster_last = 0;
  double fit_residual = 0.0;
  double clipped_mass = 0.0;
  std::vector<double> schedule;
  std::vector<double> history;
  std::vector<ZeroBand> bands;
};

struct BoundarySpectralData {
  SigmaPatch sigma;
  Eigen::VectorXd arc;      // arc coordinates of the patch nodes
  Eigen::VectorXd weights;  // metric w_S on the patch
  std::vector<BsdEntry> entries;

  int failures() const;
};

struct BsdParams {
  int bump_count = 40;
  BumpShape bump_shape = BumpShape::Hat;
  MagnitudeOptions magnitude;
  std::optional<BoundaryField> eta;  // splitting direction; default_splitting_direction if unset
  double s0 = 0.05;
  int schedule_steps = 8;
  ClusterOptions cluster;
  SignOptions sign;
  double gap_tol = kDefaultGapTol;
};

/// Recovers {lambda_k, phi_k|Sigma}, k = 1..K, from the oracle alone.
BoundarySpectralData assemble_bsd(SpectralOracle& oracle, const BoundaryField& omega0, int K,
                                  const BoundaryMesh& metric_bmesh, const SigmaPatch& sigma,
                                  const BsdParams& params = {});

/// Forward-solver ground truth in the same gauge as assemble_bsd: cluster
/// eigenvectors are rotated into the basis that diagonalises
/// G_ab = -sum eta phi_a phi_b w_S (ascending), the limit selected by eta.
BoundarySpectralData reference_bsd(const EigenSystem& eigsys, int K,
                                   const BoundaryMesh& metric_bmesh, const SigmaPatch& sigma,
                                   const BoundaryField& eta, double gap_tol = kDefaultGapTol);

struct BsdErrorRow {
  int index = 0;
  double eigenvalue_abs = 0.0;
  double eigenvalue_rel = 0.0;
  double trace_error = 0.0;  // min over sign of relative L2(Sigma) error
};

struct BsdComparison {
  std::vector<BsdErrorRow> rows;
  double max_trace_error = 0.0;
  double max_eigenvalue_rel = 0.0;
};

BsdComparison compare_bsd(const BoundarySpectralData& recovered,
                          const BoundarySpectralData& truth);

/// Relative L2 distance min_sigma ||sigma a - b||_w / ||b||_w.
double sign_aligned_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          const Eigen::VectorXd& weights);

}  // namespace robinspec
