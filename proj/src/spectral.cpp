#include "robinspec/spectral.hpp"

#include "robinspec/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace robinspec {

namespace {

using Triplet = Eigen::Triplet<double>;

void add_edge(std::vector<Triplet>& t, int a, int b, double coeff) {
  t.emplace_back(a, a, coeff);
  t.emplace_back(b, b, coeff);
  t.emplace_back(a, b, -coeff);
  t.emplace_back(b, a, -coeff);
}

/// Makes the largest-magnitude entry of each column positive.
void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index top = 0;
    vectors.col(k).cwiseAbs().maxCoeff(&top);
    if (vectors(top, k) < 0.0) vectors.col(k) *= -1.0;
  }
}

EigenSystem finish(const RobinOperator& op, const SparseMatrix& a, Eigen::VectorXd values,
                   Eigen::MatrixXd vectors) {
  fix_signs(vectors);
  EigenSystem sys;
  sys.values = std::move(values);
  sys.vectors = std::move(vectors);
  sys.mass = op.mass;
  sys.residuals.resize(sys.count());
  for (int k = 0; k < sys.count(); ++k) {
    const Eigen::VectorXd mphi = op.mass.cwiseProduct(sys.vectors.col(k));
    const Eigen::VectorXd r = a * sys.vectors.col(k) - sys.values(k) * mphi;
    sys.residuals(k) = r.norm() / mphi.norm();
  }
  return sys;
}

EigenSystem solve_dense(const RobinOperator& op, int count) {
  const SparseMatrix a = op.matrix();
  const Eigen::VectorXd dinv = op.mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd c = dinv.asDiagonal() * Eigen::MatrixXd(a) * dinv.asDiagonal();
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.info() != Eigen::Success)
    throw SolverError("dense symmetric eigensolver failed", std::numeric_limits<double>::infinity());
  Eigen::MatrixXd vectors = dinv.asDiagonal() * es.eigenvectors().leftCols(count);
  return finish(op, a, es.eigenvalues().head(count), std::move(vectors));
}

/// Deterministic pseudo-random block used to start Krylov iterations.
Eigen::MatrixXd start_block(Eigen::Index rows, Eigen::Index cols, std::uint64_t salt) {
  Rng rng(0x5eed5eedULL + salt, "lanczos-start");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() - 0.5;
  return m;
}

/// Orthonormalises the columns of w against basis.leftCols(used) and each
/// other (two passes of Gram-Schmidt). Returns the upper-triangular factor;
/// columns that collapse are replaced by fresh random directions with a zero
/// diagonal entry, keeping w = q r exact.
Eigen::MatrixXd orthonormalize(Eigen::MatrixXd& w, const Eigen::MatrixXd& basis,
                               Eigen::Index used, std::uint64_t& salt) {
  const Eigen::Index b = w.cols();
  for (int pass = 0; pass < 2; ++pass) {
    if (used > 0) w -= basis.leftCols(used) * (basis.leftCols(used).transpose() * w);
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(b, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double original = w.col(j).norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double proj = w.col(i).dot(w.col(j));
        r(i, j) += proj;
        w.col(j) -= proj * w.col(i);
      }
    }
    double norm = w.col(j).norm();
    if (norm > 1e-12 * std::max(original, 1e-300) && norm > 1e-300) {
      r(j, j) = norm;
      w.col(j) /= norm;
      continue;
    }
    // Invariant subspace reached in this column.
    Eigen::VectorXd z = start_block(w.rows(), 1, ++salt).col(0);
    for (int pass = 0; pass < 2; ++pass) {
      if (used > 0) z -= basis.leftCols(used) * (basis.leftCols(used).transpose() * z);
      for (Eigen::Index i = 0; i < j; ++i) z -= w.col(i).dot(z) * w.col(i);
    }
    w.col(j) = z.normalized();
    r(j, j) = 0.0;
  }
  return r;
}

EigenSystem solve_lanczos(const RobinOperator& op, int count, const SolverOptions& opt) {
  const Eigen::Index n = op.size();
  const SparseMatrix a = op.matrix();
  const Eigen::VectorXd dinv = op.mass.cwiseSqrt().cwiseInverse();
  SparseMatrix c = dinv.asDiagonal() * a * dinv.asDiagonal();
  SparseMatrix identity(n, n);
  identity.setIdentity();

  // Shift below the spectrum, certified by a positive-definite LDL^T.
  double shift = -1.0;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  for (int attempt = 0;; ++attempt) {
    ldlt.compute(c - shift * identity);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) break;
    if (attempt > 60) throw SolverError("could not find a shift below the spectrum", 0.0);
    shift = 4.0 * shift - 1.0;
  }

  const Eigen::Index b = std::min<Eigen::Index>(opt.block_size, n);
  const Eigen::Index max_dim = std::min<Eigen::Index>(n, std::max<Eigen::Index>(opt.max_krylov, 2 * count + 4 * b));
  Eigen::MatrixXd basis(n, max_dim);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(max_dim, max_dim);
  std::uint64_t salt = 0;

  Eigen::MatrixXd w = start_block(n, b, salt);
  orthonormalize(w, basis, 0, salt);
  basis.leftCols(b) = w;

  Eigen::MatrixXd ritz_vectors;
  Eigen::VectorXd ritz_values;
  double worst = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd r_prev;  // coupling block from the previous step
  for (Eigen::Index j = 0;; ++j) {
    const Eigen::Index col = j * b;
    const Eigen::Index dim = col + b;
    Eigen::MatrixXd q = basis.middleCols(col, b);
    w = ldlt.solve(q);
    Eigen::MatrixXd diag_block = q.transpose() * w;
    diag_block = 0.5 * (diag_block + diag_block.transpose()).eval();
    w -= q * diag_block;
    if (j > 0) w -= basis.middleCols(col - b, b) * r_prev.transpose();
    t.block(col, col, b, b) = diag_block;

    const bool room = dim + b <= max_dim;
    Eigen::MatrixXd r;
    if (room) {
      r = orthonormalize(w, basis, dim, salt);
      t.block(dim, col, b, b) = r;
      t.block(col, dim, b, b) = r.transpose();
    }

    if (dim >= count) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.topLeftCorner(dim, dim));
      // Largest theta <-> smallest lambda.
      const Eigen::MatrixXd s = es.eigenvectors().rightCols(count).rowwise().reverse();
      const Eigen::VectorXd theta = es.eigenvalues().tail(count).reverse();
      worst = 0.0;
      for (int i = 0; i < count; ++i) {
        const double bound = room ? (r * s.col(i).tail(b)).norm() : 0.0;
        worst = std::max(worst, bound / std::abs(theta(i)));
      }
      if (worst <= opt.tol || !room || dim >= n) {
        if (worst > opt.tol && dim < n)
          throw SolverError("Lanczos did not converge within " + std::to_string(max_dim) +
                                " Krylov vectors",
                            worst);
        ritz_vectors = basis.leftCols(dim) * s;
        ritz_values = theta;
        break;
      }
    }
    if (!room) throw SolverError("Krylov space exhausted before convergence", worst);
    basis.middleCols(dim, b) = w;
    r_prev = r;
  }

  // One inverse-iteration sweep followed by Rayleigh-Ritz in the original
  // scaling damps the high-frequency part of the residual.
  Eigen::MatrixXd refined = ldlt.solve(ritz_vectors);
  Eigen::MatrixXd unused(n, 0);
  orthonormalize(refined, unused, 0, salt);
  Eigen::MatrixXd h = refined.transpose() * (c * refined);
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(h);
  ritz_vectors = refined * small.eigenvectors();
  Eigen::VectorXd values(count);
  for (int i = 0; i < count; ++i) {
    ritz_vectors.col(i).normalize();
    values(i) = ritz_vectors.col(i).dot(c * ritz_vectors.col(i));
  }
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return values(x) < values(y); });
  Eigen::VectorXd sorted(count);
  Eigen::MatrixXd vectors(n, count);
  for (int i = 0; i < count; ++i) {
    sorted(i) = values(order[i]);
    vectors.col(i) = dinv.cwiseProduct(ritz_vectors.col(order[i]));
  }
  return finish(op, a, std::move(sorted), std::move(vectors));
}

}  // namespace

SparseMatrix RobinOperator::matrix() const {
  SparseMatrix m = stiffness;
  for (int i = 0; i < size(); ++i)
    if (boundary_diag(i) != 0.0) m.coeffRef(i, i) += boundary_diag(i);
  m.makeCompressed();
  return m;
}

double RobinOperator::form(const Eigen::VectorXd& u) const {
  return u.dot(stiffness * u) + u.dot(boundary_diag.cwiseProduct(u));
}

RobinOperator assemble(const Mesh& mesh, const BoundaryMesh& bmesh, const ScalarField& q,
                       const ScalarField& c, const BoundaryField& omega) {
  const int n = mesh.size();
  if (q.size() != n || c.size() != n) throw ContractError("q and c must have one value per node");
  if (omega.size() != bmesh.size())
    throw ContractError("omega must have one value per boundary node");
  if (!q.allFinite() || !c.allFinite() || !omega.allFinite())
    throw ConfigError("fields must be finite");
  if ((c.array() <= 0.0).any()) throw ConfigError("conformal factor c must be positive");

  RobinOperator op;
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 9);
  op.mass.resize(n);
  if (mesh.dim == 1) {
    for (int i = 0; i + 1 < n; ++i) add_edge(triplets, i, i + 1, 1.0 / mesh.hx);
    for (int i = 0; i < n; ++i) {
      op.mass(i) = mesh.vol_weights(i);
      triplets.emplace_back(i, i, q(i) * mesh.vol_weights(i));
    }
  } else {
    // |u_x|^2: midpoint in x, trapezoid in y; |u_y|^2 symmetric. In 2-D the
    // Dirichlet integral is conformally invariant, so c does not enter here.
    const double hx = mesh.hx, hy = mesh.hy;
    for (int j = 0; j < mesh.ny; ++j) {
      const double wy = (j == 0 || j == mesh.ny - 1) ? 0.5 * hy : hy;
      for (int i = 0; i + 1 < mesh.nx; ++i)
        add_edge(triplets, mesh.index(i, j), mesh.index(i + 1, j), wy / hx);
    }
    for (int i = 0; i < mesh.nx; ++i) {
      const double wx = (i == 0 || i == mesh.nx - 1) ? 0.5 * hx : hx;
      for (int j = 0; j + 1 < mesh.ny; ++j)
        add_edge(triplets, mesh.index(i, j), mesh.index(i, j + 1), wx / hy);
    }
    for (int i = 0; i < n; ++i) {
      op.mass(i) = c(i) * mesh.vol_weights(i);
      triplets.emplace_back(i, i, c(i) * q(i) * mesh.vol_weights(i));
    }
  }
  op.stiffness.resize(n, n);
  op.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  op.stiffness.makeCompressed();

  const BoundaryMesh metric = with_conformal(bmesh, c);
  op.boundary_weights = metric.weights;
  op.boundary_nodes = bmesh.nodes;
  op.boundary_diag = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < bmesh.size(); ++p)
    op.boundary_diag(bmesh.nodes[p]) -= omega(p) * metric.weights(p);
  return op;
}

EigenSystem solve_eigen(const RobinOperator& op, int count, const SolverOptions& options) {
  if (count < 0 || count > op.size())
    throw ContractError("requested eigenpair count exceeds the operator dimension");
  if (!(options.tol > 0.0)) throw ContractError("solver tolerance must be positive");
  if (count == 0) {
    EigenSystem empty;
    empty.values.resize(0);
    empty.vectors.resize(op.size(), 0);
    empty.residuals.resize(0);
    empty.mass = op.mass;
    return empty;
  }
  if (op.size() <= options.dense_limit) return solve_dense(op, count);
  return solve_lanczos(op, count, options);
}

int count_below(const RobinOperator& op, double shift) {
  SparseMatrix m = op.matrix();
  for (int i = 0; i < op.size(); ++i) m.coeffRef(i, i) -= shift * op.mass(i);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw SolverError("inertia factorization failed", 0.0);
  return static_cast<int>((ldlt.vectorD().array() < 0.0).count());
}

bool nearly_equal(double a, double b, double gap_tol) {
  return std::abs(a - b) < gap_tol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

std::vector<Cluster> cluster_eigenvalues(const Eigen::VectorXd& values, double gap_tol) {
  std::vector<Cluster> clusters;
  const int n = static_cast<int>(values.size());
  const double inf = std::numeric_limits<double>::infinity();
  int start = 0;
  for (int i = 0; i < n; ++i) {
    const bool ends = i + 1 == n || !nearly_equal(values(i), values(i + 1), gap_tol);
    if (!ends) continue;
    Cluster cl;
    cl.first = start;
    cl.last = i;
    cl.gap_below = start > 0 ? values(start) - values(start - 1) : inf;
    cl.gap_above = i + 1 < n ? values(i + 1) - values(i) : inf;
    clusters.push_back(cl);
    start = i + 1;
  }
  return clusters;
}

BoundaryField boundary_trace(const EigenSystem& eigsys, int index, const BoundaryMesh& bmesh) {
  if (index < 0 || index >= eigsys.count()) throw ContractError("eigenpair index out of range");
  BoundaryField trace(bmesh.size());
  for (int p = 0; p < bmesh.size(); ++p) trace(p) = eigsys.vectors(bmesh.nodes[p], index);
  return trace;
}

RieszProjector::RieszProjector(Eigen::MatrixXd vectors, Eigen::VectorXd mass)
    : vectors_(std::move(vectors)), mass_(std::move(mass)) {}

Eigen::VectorXd RieszProjector::apply(const Eigen::VectorXd& v) const {
  if (rank() == 0) return Eigen::VectorXd::Zero(v.size());
  return vectors_ * (vectors_.transpose() * mass_.cwiseProduct(v));
}

Eigen::MatrixXd RieszProjector::dense() const {
  return vectors_ * vectors_.transpose() * mass_.asDiagonal();
}

RieszProjector riesz_projector(const EigenSystem& eigsys, double center, double radius) {
  if (!(radius > 0.0)) throw ContractError("contour radius must be positive");
  const int n = eigsys.count();
  const bool complete = n == eigsys.vectors.rows();
  if (!complete && (n == 0 || center + radius >= eigsys.values(n - 1)))
    throw ContourError("contour reaches past the computed part of the spectrum");
  std::vector<int> inside;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(eigsys.values(i) - center);
    if (d >= radius * (1.0 - 1e-6) && d <= radius * (1.0 + 1e-6))
      throw ContourError("eigenvalue " + std::to_string(eigsys.values(i)) + " lies on the contour");
    if (d < radius) inside.push_back(i);
  }
  Eigen::MatrixXd vectors(eigsys.vectors.rows(), static_cast<Eigen::Index>(inside.size()));
  for (std::size_t k = 0; k < inside.size(); ++k) vectors.col(k) = eigsys.vectors.col(inside[k]);
  return RieszProjector(std::move(vectors), eigsys.mass);
}

ForwardModel::ForwardModel(Mesh mesh_, BoundaryMesh bmesh_, ScalarField q_, ScalarField c_)
    : mesh(std::move(mesh_)), bmesh(std::move(bmesh_)), q(std::move(q_)), c(std::move(c_)) {
  if (q.size() != mesh.size() || c.size() != mesh.size())
    throw ContractError("q and c must have one value per node");
  metric_bmesh_ = with_conformal(bmesh, c);
}

RobinOperator ForwardModel::assemble(const BoundaryField& omega) const {
  return robinspec::assemble(mesh, bmesh, q, c, omega);
}

EigenSystem ForwardModel::solve(const BoundaryField& omega, int count,
                                const SolverOptions& options) const {
  return solve_eigen(assemble(omega), count, options);
}

BranchTrack track_branch(const ForwardModel& model, const Eigen::VectorXd& phi0,
                         const std::function<BoundaryField(double)>& omega_path,
                         std::span<const double> t_grid, const Disk& disk) {
  BranchTrack track;
  int rank = -1;
  for (const double t : t_grid) {
    const RobinOperator op = model.assemble(omega_path(t));
    const int needed = std::min(op.size(), count_below(op, disk.center + disk.radius) + 1);
    const EigenSystem sys = solve_eigen(op, needed);
    const RieszProjector proj = riesz_projector(sys, disk.center, disk.radius);
    if (rank >= 0 && proj.rank() != rank)
      throw BranchLossError("disk no longer isolates the tracked cluster at t = " +
                            std::to_string(t));
    rank = proj.rank();
    Eigen::VectorXd v = proj.apply(phi0);
    const double norm = sys.m_norm(v);
    if (norm < 1e-8)
      throw BranchLossError("projected vector vanished at t = " + std::to_string(t));
    v /= norm;
    if (!track.vectors.empty()) {
      const double dt = std::abs(t - track.t.back());
      if (dt > 0.0)
        track.lipschitz = std::max(track.lipschitz, sys.m_norm(v - track.vectors.back()) / dt);
    }
    track.t.push_back(t);
    track.vectors.push_back(std::move(v));
  }
  return track;
}

}  // namespace robinspec
