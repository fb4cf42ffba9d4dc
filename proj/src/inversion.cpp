#include "robinspec/inversion.hpp"

#include "robinspec/errors.hpp"
#include "robinspec/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace robinspec {

namespace {

double weighted_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  return std::sqrt(v.cwiseAbs2().dot(w));
}

/// Second-difference operator on m nodes ((m - 2) x m, empty below three nodes).
Eigen::MatrixXd second_difference(int m) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(std::max(m - 2, 0), m);
  for (int i = 0; i + 2 < m; ++i) {
    l(i, i) = 1.0;
    l(i, i + 1) = -2.0;
    l(i, i + 2) = 1.0;
  }
  return l;
}

bool simple_in(const Eigen::VectorXd& values, int index, double gap_tol) {
  if (index > 0 && nearly_equal(values(index - 1), values(index), gap_tol)) return false;
  return index + 1 >= values.size() || !nearly_equal(values(index), values(index + 1), gap_tol);
}

double member_gap(const Eigen::VectorXd& values, int index) {
  double gap = std::numeric_limits<double>::infinity();
  if (index > 0) gap = std::min(gap, values(index) - values(index - 1));
  if (index + 1 < values.size()) gap = std::min(gap, values(index + 1) - values(index));
  return gap;
}

}  // namespace

TraceMagnitude recover_trace_magnitude(SpectralOracle& oracle, const BoundaryField& omega0,
                                       int index, const BumpBasis& bumps,
                                       const BoundaryMesh& metric_bmesh,
                                       const SigmaPatch& sigma, const MagnitudeOptions& opt) {
  const int m = sigma.size();
  const int J = bumps.size();
  if (J < 1) throw BasisError("empty bump basis");
  if (metric_bmesh.size() != oracle.boundary_size())
    throw ContractError("boundary mesh does not match the oracle");

  TraceMagnitude out;
  out.index = index;
  out.moments.resize(J);
  out.moment_error.resize(J);
  for (int j = 0; j < J; ++j) {
    const FdEstimate fd = gateaux_fd(oracle, omega0, bumps.bumps[j], index, opt.step, opt.gap_tol);
    out.moments(j) = fd.estimate;
    out.moment_error(j) = fd.error_indicator;
  }

  const Eigen::VectorXd w = restrict_to(sigma, metric_bmesh.weights);
  const Eigen::MatrixXd g = bumps.collocation(sigma) * w.asDiagonal();
  const double dnorm = out.moments.norm();
  out.reg = opt.reg >= 0.0 ? opt.reg : 1e-8 * dnorm;
  if (dnorm < opt.zero_moment_tol) {
    out.rho = Eigen::VectorXd::Zero(m);
    out.resolution_failure = true;
    return out;
  }

  const Eigen::MatrixXd l = second_difference(m);
  Eigen::MatrixXd a(J + l.rows(), m);
  a << g, std::sqrt(out.reg) * l;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
  b.head(J) = -out.moments;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(g);
  if (cod.rank() < std::min(J, m)) throw BasisError("moment matrix is rank deficient");
  const Eigen::VectorXd raw = a.completeOrthogonalDecomposition().solve(b);

  out.residual = (g * raw + out.moments).norm() / dnorm;
  const double total = raw.cwiseAbs().dot(w);
  const double negative = raw.cwiseMin(0.0).cwiseAbs().dot(w);
  out.clipped_mass = total > 0.0 ? negative / total : 0.0;
  out.rho = raw.cwiseMax(0.0);
  out.resolution_failure = !(out.rho.maxCoeff() > 1e3 * std::numeric_limits<double>::epsilon());
  return out;
}

std::vector<double> halving_schedule(double s0, int steps) {
  std::vector<double> s;
  for (int n = 0; n < steps; ++n) s.push_back(std::ldexp(s0, -n));
  return s;
}

BoundaryField default_splitting_direction(const BoundaryMesh& bmesh, const SigmaPatch& sigma) {
  if (bmesh.dim == 1 || sigma.size() < 3) {
    // Too few nodes for a bump profile: split with the indicator of the patch.
    return extend_from(sigma, Eigen::VectorXd::Ones(sigma.size()), bmesh.size());
  }
  const Eigen::VectorXd arc = sigma_arc(bmesh, sigma);
  const double lo = arc(0), hi = arc(arc.size() - 1);
  return smooth_bump(bmesh, sigma, 0.5 * (lo + hi), 0.35 * (hi - lo), 1.0);
}

ClusterRecovery recover_cluster_traces(SpectralOracle& oracle, const BoundaryField& omega0,
                                       const Cluster& cluster, const BoundaryField& eta,
                                       const std::vector<double>& schedule,
                                       const BumpBasis& bumps, const BoundaryMesh& metric_bmesh,
                                       const SigmaPatch& sigma, const MagnitudeOptions& magnitude,
                                       const ClusterOptions& opt) {
  ClusterRecovery out;
  out.cluster = cluster;
  if (cluster.multiplicity() == 1) {
    out.members.push_back(recover_trace_magnitude(oracle, omega0, cluster.first, bumps,
                                                  metric_bmesh, sigma, magnitude));
    out.converged = true;
    return out;
  }
  if (schedule.size() < 2)
    throw NonConvergenceError("a schedule of at least two points is needed to certify a limit");
  for (std::size_t n = 0; n < schedule.size(); ++n)
    if (!(schedule[n] > 0.0) || (n > 0 && !(schedule[n] < schedule[n - 1])))
      throw ContractError("splitting schedule must be positive and strictly decreasing");
  if (cluster.last + 1 >= oracle.count())
    throw ContractError("oracle must report one eigenvalue past the cluster");
  for (int i = 0; i < eta.size(); ++i)
    if (eta(i) != 0.0 && !sigma.contains(i))
      throw ContractError("splitting direction must vanish outside the patch");

  const Eigen::VectorXd w = restrict_to(sigma, metric_bmesh.weights);
  double bump_sup = 0.0;
  for (const auto& bump : bumps.bumps) bump_sup = std::max(bump_sup, bump.cwiseAbs().maxCoeff());

  std::vector<Eigen::VectorXd> previous;
  for (double s : schedule) {
    const BoundaryField omega = omega0 + s * eta;
    const Eigen::VectorXd values = oracle.eigenvalues(omega);
    double gap = std::numeric_limits<double>::infinity();
    for (int i = cluster.first; i <= cluster.last; ++i) {
      if (!simple_in(values, i, magnitude.gap_tol)) {
        std::ostringstream msg;
        msg << "cluster " << cluster.first + 1 << ".." << cluster.last + 1
            << " does not split at s = " << s << "; choose another splitting direction";
        throw SplittingError(msg.str());
      }
      gap = std::min(gap, member_gap(values, i));
    }

    MagnitudeOptions mo = magnitude;
    double step = magnitude.step;
    if (!(step > 0.0)) {
      step = std::numeric_limits<double>::infinity();
      for (const auto& bump : bumps.bumps) step = std::min(step, default_fd_step(omega, bump));
    }
    mo.step = std::min(step, opt.fd_gap_fraction * gap / bump_sup);

    std::vector<TraceMagnitude> members;
    std::vector<Eigen::VectorXd> current;
    for (int i = cluster.first; i <= cluster.last; ++i) {
      members.push_back(recover_trace_magnitude(oracle, omega, i, bumps, metric_bmesh, sigma, mo));
      current.push_back(members.back().magnitude());
    }
    out.schedule.push_back(s);
    out.min_gap.push_back(gap);
    out.members = std::move(members);

    if (!previous.empty()) {
      double change = 0.0;
      for (std::size_t a = 0; a < current.size(); ++a) {
        const double scale = weighted_norm(current[a], w);
        const double diff = weighted_norm(current[a] - previous[a], w);
        change = std::max(change, scale > 0.0 ? diff / scale
                                              : std::numeric_limits<double>::infinity());
      }
      out.history.push_back(change);
      if (change <= opt.tol) {
        out.converged = true;
        return out;
      }
    }
    previous = std::move(current);
  }

  std::ostringstream msg;
  msg << "cluster " << cluster.first + 1 << ".." << cluster.last + 1
      << " traces did not settle within the schedule; relative changes:";
  for (double h : out.history) msg << ' ' << h;
  throw NonConvergenceError(msg.str());
}

int BoundarySpectralData::failures() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const BsdEntry& e) { return e.status != "ok"; }));
}

BoundarySpectralData assemble_bsd(SpectralOracle& oracle, const BoundaryField& omega0, int K,
                                  const BoundaryMesh& metric_bmesh, const SigmaPatch& sigma,
                                  const BsdParams& params) {
  BoundarySpectralData out;
  out.sigma = sigma;
  out.arc = sigma_arc(metric_bmesh, sigma);
  out.weights = restrict_to(sigma, metric_bmesh.weights);
  if (K < 0) throw ContractError("K must be nonnegative");
  if (K == 0) return out;
  if (K + 1 > oracle.count())
    throw ContractError("oracle must report at least K + 1 eigenvalues");
  if (omega0.size() != oracle.boundary_size())
    throw ContractError("omega0 length does not match the oracle");

  const Eigen::VectorXd values = oracle.eigenvalues(omega0);
  const std::vector<Cluster> clusters = cluster_eigenvalues(values, params.gap_tol);
  const BumpBasis bumps = bump_basis(metric_bmesh, sigma,
                                     std::min(params.bump_count, sigma.size()), params.bump_shape);
  const BoundaryField eta =
      params.eta ? *params.eta : default_splitting_direction(metric_bmesh, sigma);
  const std::vector<double> schedule = halving_schedule(params.s0, params.schedule_steps);
  MagnitudeOptions magnitude = params.magnitude;
  magnitude.gap_tol = params.gap_tol;

  for (const Cluster& c : clusters) {
    if (c.first >= K) break;
    const int stop = std::min(c.last, K - 1);
    std::vector<BsdEntry> group;
    for (int i = c.first; i <= stop; ++i) {
      BsdEntry e;
      e.index = i;
      e.eigenvalue = values(i);
      e.provenance = c.multiplicity() == 1 ? "simple" : "cluster";
      e.cluster_first = c.first;
      e.cluster_last = c.last;
      group.push_back(std::move(e));
    }
    std::vector<TraceMagnitude> members;
    try {
      if (c.last + 1 >= oracle.count())
        throw ContractError("cluster reaches the last reported eigenvalue; raise the oracle count");
      if (c.multiplicity() == 1) {
        members.push_back(recover_trace_magnitude(oracle, omega0, c.first, bumps, metric_bmesh,
                                                  sigma, magnitude));
      } else {
        ClusterRecovery rec = recover_cluster_traces(oracle, omega0, c, eta, schedule, bumps,
                                                     metric_bmesh, sigma, magnitude, params.cluster);
        members = std::move(rec.members);
        for (auto& e : group) {
          e.schedule = rec.schedule;
          e.history = rec.history;
        }
      }
    } catch (const MissingQueryError&) {
      throw;  // absent data, not a per-index numerical failure
    } catch (const Error& err) {
      for (auto& e : group) {
        e.status = error_name(err);
        e.error = err.what();
      }
    }

    for (std::size_t a = 0; a < members.size() && a < group.size(); ++a) {
      BsdEntry& e = group[a];
      const TraceMagnitude& tm = members[a];
      e.magnitude = tm.magnitude();
      e.fit_residual = tm.residual;
      e.clipped_mass = tm.clipped_mass;
      if (tm.resolution_failure) {
        e.status = "ResolutionFailure";
        e.error = "moment data vanish; the trace magnitude is not resolved";
        continue;
      }
      if (metric_bmesh.dim == 1 || sigma.size() < 3) {
        // Each endpoint is its own component: anchor every node positive.
        e.trace = e.magnitude;
        continue;
      }
      try {
        SignRecovery sr = recover_sign(e.magnitude, out.arc, params.sign);
        e.trace = std::move(sr.values);
        e.bands = std::move(sr.bands);
      } catch (const Error& err) {
        e.status = error_name(err);
        e.error = err.what();
      }
    }
    for (auto& e : group) out.entries.push_back(std::move(e));
  }
  return out;
}

BoundarySpectralData reference_bsd(const EigenSystem& eigsys, int K,
                                   const BoundaryMesh& metric_bmesh, const SigmaPatch& sigma,
                                   const BoundaryField& eta, double gap_tol) {
  if (K > eigsys.count()) throw ContractError("reference needs at least K eigenpairs");
  BoundarySpectralData out;
  out.sigma = sigma;
  out.arc = sigma_arc(metric_bmesh, sigma);
  out.weights = restrict_to(sigma, metric_bmesh.weights);
  if (K == 0) return out;

  const Eigen::VectorXd ew = eta.cwiseProduct(metric_bmesh.weights);
  for (const Cluster& c : cluster_eigenvalues(eigsys.values, gap_tol)) {
    if (c.first >= K) break;
    const int mu = c.multiplicity();
    Eigen::MatrixXd traces(metric_bmesh.size(), mu);
    for (int a = 0; a < mu; ++a) traces.col(a) = boundary_trace(eigsys, c.first + a, metric_bmesh);
    if (mu > 1) {
      Eigen::MatrixXd g = -traces.transpose() * ew.asDiagonal() * traces;
      g = 0.5 * (g + g.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
      traces = traces * es.eigenvectors();
    }
    for (int a = 0; a < mu && c.first + a < K; ++a) {
      BsdEntry e;
      e.index = c.first + a;
      e.eigenvalue = eigsys.values(c.first + a);
      e.trace = restrict_to(sigma, traces.col(a));
      e.magnitude = e.trace.cwiseAbs();
      e.provenance = mu == 1 ? "simple" : "cluster";
      e.cluster_first = c.first;
      e.cluster_last = c.last;
      out.entries.push_back(std::move(e));
    }
  }
  return out;
}

double sign_aligned_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          const Eigen::VectorXd& weights) {
  if (a.size() != b.size() || b.size() != weights.size())
    throw ContractError("trace lengths differ");
  const double scale = weighted_norm(b, weights);
  const double err = std::min(weighted_norm(a - b, weights), weighted_norm(a + b, weights));
  return scale > 0.0 ? err / scale : err;
}

BsdComparison compare_bsd(const BoundarySpectralData& recovered,
                          const BoundarySpectralData& truth) {
  if (recovered.entries.size() != truth.entries.size() ||
      recovered.sigma.first != truth.sigma.first || recovered.sigma.last != truth.sigma.last)
    throw ContractError("recovered and reference data have different shapes");
  BsdComparison out;
  for (std::size_t k = 0; k < truth.entries.size(); ++k) {
    const BsdEntry& r = recovered.entries[k];
    const BsdEntry& t = truth.entries[k];
    if (r.index != t.index) throw ContractError("recovered and reference indices differ");
    BsdErrorRow row;
    row.index = t.index;
    row.eigenvalue_abs = std::abs(r.eigenvalue - t.eigenvalue);
    row.eigenvalue_rel = row.eigenvalue_abs / std::max(std::abs(t.eigenvalue), 1.0);
    row.trace_error = r.trace.size() == t.trace.size()
                          ? sign_aligned_error(r.trace, t.trace, truth.weights)
                          : std::numeric_limits<double>::infinity();
    out.max_trace_error = std::max(out.max_trace_error, row.trace_error);
    out.max_eigenvalue_rel = std::max(out.max_eigenvalue_rel, row.eigenvalue_rel);
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace robinspec
