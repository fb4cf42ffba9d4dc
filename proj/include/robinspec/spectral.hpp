#pragma once

#include "robinspec/fields.hpp"
#include "robinspec/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <span>
#include <vector>

namespace robinspec {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Discrete Robin-Schroedinger operator obtained from the quadratic form
///
///   Q(u) = sum |grad u|^2 dV + sum c q |u|^2 dV - sum omega |u|^2 dS
///
/// on a tensor grid. The boundary term carries a minus sign because the
/// Robin condition d_nu u + omega u = 0 uses the interior normal; the
/// eigenvalue derivative along omega_0 + t w is then -sum |phi|^2 w dS.
/// The generalized problem is (stiffness + boundary) phi = lambda M phi.
struct RobinOperator {
  SparseMatrix stiffness;          // gradient + potential part, symmetric
  Eigen::VectorXd boundary_diag;   // per mesh node, -omega * w_S (nonzero on dOmega only)
  Eigen::VectorXd mass;            // M = diag(c w_V) (w_V on the interval)
  Eigen::VectorXd boundary_weights;  // metric w_S per boundary position
  std::vector<int> boundary_nodes;

  int size() const { return static_cast<int>(mass.size()); }
  /// stiffness + diag(boundary_diag)
  SparseMatrix matrix() const;
  /// u^T (stiffness + B_omega) u
  double form(const Eigen::VectorXd& u) const;
};

RobinOperator assemble(const Mesh& mesh, const BoundaryMesh& bmesh, const ScalarField& q,
                       const ScalarField& c, const BoundaryField& omega);

/// Ascending eigenpairs with M-orthonormal eigenvectors (columns).
struct EigenSystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::VectorXd residuals;  // ||(A + B) phi - lambda M phi|| / ||M phi||
  Eigen::VectorXd mass;

  int count() const { return static_cast<int>(values.size()); }
  double m_dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    return u.dot(mass.cwiseProduct(v));
  }
  double m_norm(const Eigen::VectorXd& u) const { return std::sqrt(m_dot(u, u)); }
};

struct SolverOptions {
  double tol = 1e-10;
  int dense_limit = 800;  // dense symmetric QL up to this dimension
  int block_size = 4;
  int max_krylov = 900;
};

EigenSystem solve_eigen(const RobinOperator& op, int count, const SolverOptions& options = {});

/// Number of generalized eigenvalues strictly below `shift` (Sylvester inertia).
int count_below(const RobinOperator& op, double shift);

/// Contiguous index range [first, last] (0-based) of numerically equal eigenvalues.
struct Cluster {
  int first = 0;
  int last = 0;
  double gap_below = 0.0;  // distance to the previous eigenvalue (inf if none)
  double gap_above = 0.0;  // distance to the next eigenvalue (inf if none)

  int multiplicity() const { return last - first + 1; }
  bool contains(int index) const { return index >= first && index <= last; }
};

inline constexpr double kDefaultGapTol = 1e-7;

/// Consecutive values closer than gap_tol * (1 + max|lambda|) are merged.
std::vector<Cluster> cluster_eigenvalues(const Eigen::VectorXd& values,
                                         double gap_tol = kDefaultGapTol);
bool nearly_equal(double a, double b, double gap_tol);

/// Restriction of eigenvector `index` (0-based) to the boundary positions.
BoundaryField boundary_trace(const EigenSystem& eigsys, int index, const BoundaryMesh& bmesh);

/// Spectral projector onto eigenpairs strictly inside the disk; apply(v)
/// computes sum phi_i (phi_i^T M v).
class RieszProjector {
public:
  RieszProjector(Eigen::MatrixXd vectors, Eigen::VectorXd mass);

  int rank() const { return static_cast<int>(vectors_.cols()); }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd dense() const;

private:
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd mass_;
};

RieszProjector riesz_projector(const EigenSystem& eigsys, double center, double radius);

/// Mesh plus coefficients: everything needed to assemble A^omega for any omega.
struct ForwardModel {
  Mesh mesh;
  BoundaryMesh bmesh;  // flat weights
  ScalarField q;
  ScalarField c;

  ForwardModel(Mesh mesh, BoundaryMesh bmesh, ScalarField q, ScalarField c);

  /// Boundary mesh whose weights include the conformal length element.
  const BoundaryMesh& metric_boundary() const { return metric_bmesh_; }
  RobinOperator assemble(const BoundaryField& omega) const;
  EigenSystem solve(const BoundaryField& omega, int count,
                    const SolverOptions& options = {}) const;

private:
  BoundaryMesh metric_bmesh_;
};

struct Disk {
  double center = 0.0;
  double radius = 0.0;
};

struct BranchTrack {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> vectors;  // M-normalised P(t) phi0
  double lipschitz = 0.0;  // max ||phi(t_{i+1}) - phi(t_i)||_M / dt
};

/// Follows P(t) phi0 / ||P(t) phi0||_M along omega(t), where P(t) is the
/// projector for `disk`. Throws BranchLossError when P(t) phi0 vanishes.
BranchTrack track_branch(const ForwardModel& model, const Eigen::VectorXd& phi0,
                         const std::function<BoundaryField(double)>& omega_path,
                         std::span<const double> t_grid, const Disk& disk);

}  // namespace robinspec
