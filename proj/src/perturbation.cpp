#include "robinspec/perturbation.hpp"

#include "robinspec/errors.hpp"

#include <cmath>
#include <string>

namespace robinspec {

namespace {

void require_simple(const Eigen::VectorXd& values, int index, double gap_tol) {
  const bool below = index > 0 && nearly_equal(values(index - 1), values(index), gap_tol);
  const bool above = nearly_equal(values(index), values(index + 1), gap_tol);
  if (below || above)
    throw MultiplicityError("eigenvalue " + std::to_string(index + 1) +
                                " is not simple at a query point; use the cluster pipeline",
                            index);
}

bool simple_at(const Eigen::VectorXd& values, int index, double gap_tol) {
  const bool below = index > 0 && nearly_equal(values(index - 1), values(index), gap_tol);
  return !below && !nearly_equal(values(index), values(index + 1), gap_tol);
}

}  // namespace

double gateaux_exact(const BoundaryField& trace, const BoundaryField& direction,
                     const BoundaryMesh& metric_bmesh) {
  if (trace.size() != direction.size())
    throw ContractError("trace and direction lengths differ");
  return -integrate_boundary(metric_bmesh, trace.cwiseAbs2().cwiseProduct(direction));
}

double default_fd_step(const BoundaryField& base, const BoundaryField& direction) {
  const double dir = direction.size() ? direction.cwiseAbs().maxCoeff() : 0.0;
  const double scale = 1.0 + (base.size() ? base.cwiseAbs().maxCoeff() : 0.0);
  return dir > 0.0 ? 1e-4 * scale / dir : 1e-4 * scale;
}

FdEstimate gateaux_fd(SpectralOracle& oracle, const BoundaryField& base,
                      const BoundaryField& direction, int index, double step, double gap_tol) {
  if (index < 0 || index + 1 >= oracle.count())
    throw ContractError("oracle must report at least one eigenvalue past the requested index");
  if (base.size() != oracle.boundary_size() || direction.size() != oracle.boundary_size())
    throw ContractError("impedance length does not match the oracle");
  const double h = step > 0.0 ? step : default_fd_step(base, direction);
  const ImpedancePath path{base, direction};

  auto query = [&](double t) {
    const Eigen::VectorXd values = oracle.eigenvalues(path.at(t));
    require_simple(values, index, gap_tol);
    return values(index);
  };
  query(0.0);
  const double plus = query(h), minus = query(-h);
  const double half_plus = query(0.5 * h), half_minus = query(-0.5 * h);

  FdEstimate out;
  out.step = h;
  out.estimate = (plus - minus) / (2.0 * h);
  const double half = (half_plus - half_minus) / h;
  out.error_indicator = 4.0 / 3.0 * std::abs(out.estimate - half);
  return out;
}

HadamardReport hadamard_check(const EigenSystem& eigsys, const BoundaryMesh& metric_bmesh,
                              SpectralOracle& oracle, const BoundaryField& base,
                              const std::vector<BoundaryField>& directions, int max_index,
                              double step, double tolerance, double gap_tol) {
  HadamardReport report;
  const int last = std::min({max_index, eigsys.count(), oracle.count() - 1});
  for (int k = 0; k < last; ++k) {
    const BoundaryField trace = boundary_trace(eigsys, k, metric_bmesh);
    for (int j = 0; j < static_cast<int>(directions.size()); ++j) {
      HadamardEntry e;
      e.index = k;
      e.direction = j;
      e.exact = gateaux_exact(trace, directions[j], metric_bmesh);
      try {
        const FdEstimate fd = gateaux_fd(oracle, base, directions[j], k, step, gap_tol);
        e.fd = fd.estimate;
        e.error_indicator = fd.error_indicator;
        e.abs_error = std::abs(e.fd - e.exact);
        if (std::abs(e.exact) < 1e-10) {
          e.status = "skipped";
        } else {
          e.rel_error = e.abs_error / std::abs(e.exact);
          report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
          e.status = e.rel_error > tolerance ? "flagged" : "ok";
          if (e.rel_error > tolerance) ++report.flagged;
        }
      } catch (const MultiplicityError&) {
        e.status = "multiplicity";
        ++report.multiplicity;
      }
      report.entries.push_back(e);
    }
  }
  return report;
}

SimplifyResult simplify_spectrum(SpectralOracle& oracle, const BoundaryField& omega0,
                                 const BoundaryMesh& bmesh, const SigmaPatch& sigma,
                                 const SimplifyOptions& opt) {
  if (!(opt.epsilon > 0.0)) throw ContractError("epsilon must be positive");
  if (opt.budget < 1) throw ContractError("trial budget must be at least one");
  if (opt.k_max < 1 || opt.k_max + 1 > oracle.count())
    throw ContractError("oracle must report k_max + 1 eigenvalues");

  SimplifyResult result;
  result.omega = omega0;
  Eigen::VectorXd values = oracle.eigenvalues(omega0);

  bool all_simple = true;
  for (int i = 0; i < opt.k_max; ++i) all_simple = all_simple && simple_at(values, i, opt.gap_tol);
  if (all_simple) {
    result.eigenvalues = values;
    result.unperturbed = true;
    for (int i = 0; i < opt.k_max; ++i)
      result.locked.push_back({i, values(i + 1) - values(i), 0});
    return result;
  }

  for (int stage = 1; stage <= opt.k_max; ++stage) {
    const int index = stage - 1;
    const double floor_factor = 0.5 - std::ldexp(1.0, -stage);
    const double amplitude = opt.epsilon / (opt.k_max * std::ldexp(1.0, stage));

    auto acceptable = [&](const Eigen::VectorXd& v) {
      if (!simple_at(v, index, opt.gap_tol)) return false;
      for (const auto& lock : result.locked)
        if (!(v(lock.index + 1) - v(lock.index) > floor_factor * lock.gap)) return false;
      return true;
    };

    StageRecord rec;
    rec.stage = stage;
    rec.index = index;
    rec.amplitude = amplitude;
    rec.floor_factor = floor_factor;
    rec.locked = result.locked;

    bool accepted = acceptable(values);
    for (int trial = 1; !accepted && trial <= opt.budget; ++trial) {
      const std::string label =
          "simplify/stage" + std::to_string(stage) + "/trial" + std::to_string(trial);
      const BoundaryField candidate =
          result.omega + random_bump(bmesh, sigma, opt.seed, amplitude, label);
      const Eigen::VectorXd trial_values = oracle.eigenvalues(candidate);
      if (acceptable(trial_values)) {
        result.omega = candidate;
        values = trial_values;
        rec.trials = trial;
        accepted = true;
      }
    }
    if (!accepted)
      throw SearchFailure("no trial made eigenvalue " + std::to_string(index + 1) +
                              " simple within the budget",
                          index);

    for (const auto& lock : result.locked)
      rec.gaps_at_accept.push_back(values(lock.index + 1) - values(lock.index));
    result.locked.push_back({index, values(index + 1) - values(index), stage});
    result.stages.push_back(std::move(rec));
  }
  result.eigenvalues = values;
  result.distance = (result.omega - omega0).cwiseAbs().maxCoeff();
  return result;
}

}  // namespace robinspec
