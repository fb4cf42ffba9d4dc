#pragma once

// Small fixtures shared by the unit tests.

#include "robinspec/fields.hpp"
#include "robinspec/geometry.hpp"
#include "robinspec/spectral.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace robinspec::test {

inline constexpr double kPi = std::numbers::pi;

inline std::shared_ptr<ForwardModel> interval_model(int n, double q = 0.0) {
  auto [mesh, bmesh] = build_mesh(DomainSpec::interval(1.0, n));
  ScalarField qf = constant_field(mesh, q);
  ScalarField cf = constant_field(mesh, 1.0);
  return std::make_shared<ForwardModel>(std::move(mesh), std::move(bmesh), std::move(qf),
                                        std::move(cf));
}

inline std::shared_ptr<ForwardModel> rectangle_model(double a, double b, int nx, int ny,
                                                     double q = 0.0) {
  auto [mesh, bmesh] = build_mesh(DomainSpec::rectangle(a, b, nx, ny));
  ScalarField qf = constant_field(mesh, q);
  ScalarField cf = constant_field(mesh, 1.0);
  return std::make_shared<ForwardModel>(std::move(mesh), std::move(bmesh), std::move(qf),
                                        std::move(cf));
}

/// Eigenvalue (m, n) of the discrete Neumann Laplacian on a uniform tensor grid.
inline double discrete_neumann(int m, int n, double hx, double hy) {
  const double sx = std::sin(m * kPi * hx / 2.0), sy = std::sin(n * kPi * hy / 2.0);
  return 4.0 / (hx * hx) * sx * sx + 4.0 / (hy * hy) * sy * sy;
}

/// Root of kappa tanh(kappa) = h (h > 0) by bisection; lambda_1 = -kappa^2
/// solves sqrt(lambda) tan(sqrt(lambda)) = -h.
inline double robin_ground_state(double h) {
  double lo = 0.0, hi = 1.0;
  while (hi * std::tanh(hi) < h) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::tanh(mid) < h ? lo : hi) = mid;
  }
  const double kappa = 0.5 * (lo + hi);
  return -kappa * kappa;
}

}  // namespace robinspec::test
