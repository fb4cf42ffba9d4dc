#include "robinspec/errors.hpp"
#include "robinspec/spectral.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace robinspec;
using namespace robinspec::test;

namespace {

/// Direct loop evaluation of the discretised quadratic form, written
/// independently of the triplet assembly.
double form_oracle(const Mesh& mesh, const BoundaryMesh& bmesh, const ScalarField& q,
                   const ScalarField& c, const BoundaryField& omega, const Eigen::VectorXd& u) {
  double value = 0.0;
  if (mesh.dim == 1) {
    for (int i = 0; i + 1 < mesh.nx; ++i) value += std::pow(u(i + 1) - u(i), 2) / mesh.hx;
    for (int i = 0; i < mesh.nx; ++i) value += q(i) * u(i) * u(i) * mesh.vol_weights(i);
    value -= omega(0) * u(0) * u(0) + omega(1) * u(mesh.nx - 1) * u(mesh.nx - 1);
    return value;
  }
  auto trap = [](int k, int n, double h) { return (k == 0 || k == n - 1) ? h / 2 : h; };
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i) {
      const int a = mesh.index(i, j);
      if (i + 1 < mesh.nx)
        value += trap(j, mesh.ny, mesh.hy) * std::pow(u(mesh.index(i + 1, j)) - u(a), 2) / mesh.hx;
      if (j + 1 < mesh.ny)
        value += trap(i, mesh.nx, mesh.hx) * std::pow(u(mesh.index(i, j + 1)) - u(a), 2) / mesh.hy;
      value += c(a) * q(a) * u(a) * u(a) * mesh.vol_weights(a);
    }
  for (int p = 0; p < bmesh.size(); ++p) {
    const int a = bmesh.nodes[p];
    value -= omega(p) * u(a) * u(a) * bmesh.weights(p) * std::sqrt(c(a));
  }
  return value;
}

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
  Rng rng(seed, "test-vector");
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("assembled form equals the discretised quadratic form") {
  auto [mesh, bmesh] = build_mesh(DomainSpec::rectangle(1.5, 1.0, 7, 5));
  const ScalarField q = random_vector(mesh.size(), 1);
  const ScalarField c = random_vector(mesh.size(), 2).array() + 2.0;
  const BoundaryField omega = random_vector(bmesh.size(), 3);
  const RobinOperator op = assemble(mesh, bmesh, q, c, omega);
  const SparseMatrix a = op.matrix();
  CHECK((Eigen::MatrixXd(a) - Eigen::MatrixXd(a).transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (std::uint64_t s = 10; s < 15; ++s) {
    const Eigen::VectorXd u = random_vector(mesh.size(), s);
    const double expected = form_oracle(mesh, bmesh, q, c, omega, u);
    CHECK(std::abs(op.form(u) - expected) <= 1e-12 * (1.0 + std::abs(expected)));
  }

  auto [imesh, ibmesh] = build_mesh(DomainSpec::interval(1.0, 9));
  const ScalarField iq = random_vector(imesh.size(), 4);
  const ScalarField ic = constant_field(imesh, 1.0);
  const BoundaryField iomega = random_vector(2, 5);
  const RobinOperator iop = assemble(imesh, ibmesh, iq, ic, iomega);
  const Eigen::VectorXd u = random_vector(imesh.size(), 6);
  CHECK(iop.form(u) == doctest::Approx(form_oracle(imesh, ibmesh, iq, ic, iomega, u)).epsilon(1e-13));
}

TEST_CASE("Neumann stiffness is positive semidefinite and u = x has energy 1") {
  auto [mesh, bmesh] = build_mesh(DomainSpec::rectangle(1.0, 1.0, 11, 11));
  const RobinOperator op = assemble(mesh, bmesh, constant_field(mesh, 0.0),
                                    constant_field(mesh, 1.0), constant_boundary(bmesh, 0.0));
  const Eigen::VectorXd x = mesh.coords.col(0);
  CHECK(std::abs(op.form(x) - 1.0) <= 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(op.matrix())};
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);

  auto [imesh, ibmesh] = build_mesh(DomainSpec::interval(1.0, 21));
  const RobinOperator iop = assemble(imesh, ibmesh, constant_field(imesh, 0.0),
                                     constant_field(imesh, 1.0), constant_boundary(ibmesh, 0.0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ies{Eigen::MatrixXd(iop.matrix())};
  CHECK(ies.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("endpoint impedance enters the form with the interior-normal sign") {
  // With d_nu u + omega u = 0 and nu the interior normal, integration by parts
  // gives Q(u) = int |u'|^2 - omega(0) u(0)^2 - omega(1) u(1)^2.
  auto [mesh, bmesh] = build_mesh(DomainSpec::interval(1.0, 11));
  const ScalarField q = constant_field(mesh, 0.0), c = constant_field(mesh, 1.0);
  const double h = 0.37;
  const RobinOperator base = assemble(mesh, bmesh, q, c, constant_boundary(bmesh, 0.0));
  const RobinOperator robin = assemble(mesh, bmesh, q, c, constant_boundary(bmesh, h));
  const Eigen::VectorXd u = random_vector(mesh.size(), 9);
  const double expected = -h * (u(0) * u(0) + u(10) * u(10));
  CHECK(std::abs(robin.form(u) - base.form(u) - expected) <= 1e-14);
}

TEST_CASE("nonpositive conformal factor is rejected") {
  auto [mesh, bmesh] = build_mesh(DomainSpec::rectangle(1.0, 1.0, 5, 5));
  ScalarField c = constant_field(mesh, 1.0);
  c(3) = 0.0;
  CHECK_THROWS_AS(assemble(mesh, bmesh, constant_field(mesh, 0.0), c, constant_boundary(bmesh, 0.0)),
                  ConfigError);
}

TEST_CASE("Neumann interval spectrum converges at second order") {
  auto model = interval_model(2001);
  const EigenSystem sys = model->solve(constant_boundary(model->bmesh, 0.0), 10);
  CHECK(std::abs(sys.values(0)) <= 1e-9);
  for (int k = 1; k < 10; ++k) {
    const double exact = std::pow(k * kPi, 2);
    CHECK(std::abs(sys.values(k) - exact) / exact <= 1e-3);
  }
  // M-orthonormality and residual certificates.
  const Eigen::MatrixXd gram = sys.vectors.transpose() * sys.mass.asDiagonal() * sys.vectors;
  CHECK((gram - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(sys.residuals.maxCoeff() <= 1e-8);

  auto coarse = interval_model(101), fine = interval_model(201);
  const double e1 = std::abs(coarse->solve(constant_boundary(coarse->bmesh, 0.0), 5).values(4) -
                             std::pow(4 * kPi, 2));
  const double e2 = std::abs(fine->solve(constant_boundary(fine->bmesh, 0.0), 5).values(4) -
                             std::pow(4 * kPi, 2));
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("square spectrum matches the discrete separable formula") {
  auto model = rectangle_model(1.0, 1.0, 21, 21);
  const EigenSystem sys = model->solve(constant_boundary(model->bmesh, 0.0), 10);
  std::vector<double> expected;
  for (int m = 0; m < 6; ++m)
    for (int n = 0; n < 6; ++n) expected.push_back(discrete_neumann(m, n, 0.05, 0.05));
  std::sort(expected.begin(), expected.end());
  for (int k = 0; k < 10; ++k) CHECK(std::abs(sys.values(k) - expected[k]) <= 1e-9 * (1 + expected[k]));
  const std::vector<Cluster> clusters = cluster_eigenvalues(sys.values);
  REQUIRE(clusters.size() >= 2);
  CHECK(clusters[1].first == 1);
  CHECK(clusters[1].multiplicity() == 2);
}

TEST_CASE("shift-invert Lanczos agrees with the dense solver") {
  auto model = rectangle_model(1.0, 0.8, 31, 29, 0.5);
  BoundaryField omega = constant_boundary(model->bmesh, 0.2);
  omega(7) = -0.4;
  SolverOptions dense;
  dense.dense_limit = 100000;
  SolverOptions sparse;
  sparse.dense_limit = 10;
  const EigenSystem a = model->solve(omega, 12, dense);
  const EigenSystem b = model->solve(omega, 12, sparse);
  for (int k = 0; k < 12; ++k) CHECK(std::abs(a.values(k) - b.values(k)) <= 1e-9 * (1 + std::abs(a.values(k))));
  CHECK(b.residuals.maxCoeff() <= 1e-8);
  const Eigen::MatrixXd gram = b.vectors.transpose() * b.mass.asDiagonal() * b.vectors;
  CHECK((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() <= 1e-10);
  // Sylvester inertia agrees with the computed spectrum.
  const RobinOperator op = model->assemble(omega);
  CHECK(count_below(op, 0.5 * (b.values(5) + b.values(6))) == 6);
}

TEST_CASE("Robin ground state matches the secular equation") {
  auto model = interval_model(2001);
  const double h = 0.01;
  BoundaryField omega(2);
  omega << h, 0.0;
  const EigenSystem sys = model->solve(omega, 3);
  const double exact = robin_ground_state(h);  // sqrt(l) tan sqrt(l) = -h
  CHECK(std::abs(sys.values(0) - exact) <= 1e-6 * std::abs(exact));
  CHECK(std::abs(sys.values(0) + h) <= 2.0 * h * h);
}

TEST_CASE("cluster_eigenvalues") {
  Eigen::VectorXd v(4);
  v << 0.0, kPi * kPi, kPi * kPi + 1e-9, 2 * kPi * kPi;
  std::vector<Cluster> c = cluster_eigenvalues(v, 1e-6);
  REQUIRE(c.size() == 3);
  CHECK(c[1].first == 1);
  CHECK(c[1].last == 2);
  CHECK(c[0].gap_below == std::numeric_limits<double>::infinity());

  Eigen::VectorXd s(3);
  s << 1.0, 2.0, 3.0;
  for (const auto& cl : cluster_eigenvalues(s)) CHECK(cl.multiplicity() == 1);

  const Eigen::VectorXd e = Eigen::VectorXd::Constant(5, 3.0);
  c = cluster_eigenvalues(e);
  REQUIRE(c.size() == 1);
  CHECK(c[0].multiplicity() == 5);
}

TEST_CASE("boundary traces of Neumann eigenfunctions") {
  auto model = interval_model(2001);
  const EigenSystem sys = model->solve(constant_boundary(model->bmesh, 0.0), 3);
  const BoundaryField t1 = boundary_trace(sys, 0, model->bmesh);
  CHECK(std::abs(t1(0) - 1.0) <= 1e-9);
  CHECK(std::abs(t1(1) - 1.0) <= 1e-9);
  const BoundaryField t2 = boundary_trace(sys, 1, model->bmesh);
  CHECK(std::abs(std::abs(t2(0)) - std::sqrt(2.0)) <= 1e-3);
  CHECK(t2(0) * t2(1) < 0.0);
  CHECK(std::abs(t2(0) + t2(1)) <= 1e-6);

  // (1,0) mode of the square lies in the double eigenspace: project the
  // closed-form trace onto the span of the two computed traces.
  auto sq = rectangle_model(1.0, 1.0, 41, 41);
  const EigenSystem ss = sq->solve(constant_boundary(sq->bmesh, 0.0), 3);
  Eigen::MatrixXd span(sq->bmesh.size(), 2);
  span.col(0) = boundary_trace(ss, 1, sq->bmesh);
  span.col(1) = boundary_trace(ss, 2, sq->bmesh);
  Eigen::VectorXd closed(sq->bmesh.size());
  for (int p = 0; p < sq->bmesh.size(); ++p) {
    const int node = sq->bmesh.nodes[p];
    closed(p) = std::sqrt(2.0) * std::cos(kPi * sq->mesh.coords(node, 0));
  }
  const Eigen::Vector2d coeff = span.colPivHouseholderQr().solve(closed);
  CHECK((span * coeff - closed).norm() / closed.norm() <= 1e-3);
  CHECK(std::abs(coeff.squaredNorm() - 1.0) <= 1e-3);
}

TEST_CASE("Riesz projectors: rank, idempotence, M-self-adjointness") {
  auto sq = rectangle_model(1.0, 1.0, 21, 21);
  const EigenSystem sys = sq->solve(constant_boundary(sq->bmesh, 0.0), 8);
  const double lam2 = sys.values(1);
  CHECK(riesz_projector(sys, sys.values(3), 0.5).rank() == 1);
  const RieszProjector p2 = riesz_projector(sys, lam2, 1.0);
  CHECK(p2.rank() == 2);
  CHECK(riesz_projector(sys, 5.0, 1.0).rank() == 0);

  const Eigen::MatrixXd p = p2.dense();
  CHECK((p * p - p).cwiseAbs().maxCoeff() <= 1e-10);
  const Eigen::MatrixXd mp = sys.mass.asDiagonal() * p;
  CHECK((mp - mp.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  const Eigen::VectorXd v = random_vector(sys.mass.size(), 3);
  CHECK((p2.apply(v) - p * v).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(riesz_projector(sys, 5.0, 1.0).apply(v).norm() == 0.0);

  CHECK_THROWS_AS(riesz_projector(sys, lam2 - 1.0, 1.0), ContourError);
  CHECK_THROWS_AS(riesz_projector(sys, sys.values(7), 1.0), ContourError);  // past the computed part
}

TEST_CASE("track_branch") {
  auto sq = rectangle_model(1.0, 1.0, 11, 11);
  const BoundaryField omega0 = constant_boundary(sq->bmesh, 0.0);
  const EigenSystem sys = sq->solve(omega0, 8);
  const SigmaPatch sigma = make_sigma(sq->bmesh, 0.0, 1.0);
  const BoundaryField bump = smooth_bump(sq->bmesh, sigma, 0.5, 0.35, 1.0);

  SUBCASE("constant path leaves the vector unchanged") {
    const std::vector<double> t = {0.0, 0.5, 1.0};
    const BranchTrack tr = track_branch(*sq, sys.vectors.col(3), [&](double) { return omega0; }, t,
                                        Disk{sys.values(3), 1.0});
    for (const auto& v : tr.vectors) CHECK((v - sys.vectors.col(3)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("simple eigenvalue follows the direct eigensolve") {
    const std::vector<double> t = {0.0, 1e-3, 2e-3, 5e-3};
    const BranchTrack tr = track_branch(*sq, sys.vectors.col(0),
                                        [&](double s) -> BoundaryField { return omega0 + s * bump; },
                                        t, Disk{sys.values(0), 1.0});
    for (std::size_t i = 0; i < t.size(); ++i) {
      const EigenSystem d = sq->solve(omega0 + t[i] * bump, 2);
      const Eigen::VectorXd diff_p = tr.vectors[i] - d.vectors.col(0);
      const Eigen::VectorXd diff_m = tr.vectors[i] + d.vectors.col(0);
      CHECK(std::min(d.m_norm(diff_p), d.m_norm(diff_m)) <= 1e-8);
    }
    CHECK(tr.lipschitz > 0.0);
  }
  SUBCASE("split double eigenvalue follows the eta-adapted branch") {
    // 2x2 degenerate perturbation theory selects the starting vector.
    Eigen::MatrixXd traces(sq->bmesh.size(), 2);
    traces.col(0) = boundary_trace(sys, 1, sq->bmesh);
    traces.col(1) = boundary_trace(sys, 2, sq->bmesh);
    Eigen::Matrix2d g = -traces.transpose() * bump.cwiseProduct(sq->bmesh.weights).asDiagonal() * traces;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
    const Eigen::VectorXd phi0 = sys.vectors.middleCols(1, 2) * es.eigenvectors().col(0);
    const std::vector<double> t = {0.0, 2.5e-5, 5e-5, 1e-4};
    const BranchTrack tr = track_branch(*sq, phi0,
                                        [&](double s) -> BoundaryField { return omega0 + s * bump; },
                                        t, Disk{sys.values(1), 1.0});
    for (std::size_t i = 1; i < t.size(); ++i) {
      const EigenSystem d = sq->solve(omega0 + t[i] * bump, 3);
      const Eigen::VectorXd lower = d.vectors.col(1);  // smaller G eigenvalue = lower branch
      const double err = std::min(d.m_norm(tr.vectors[i] - lower), d.m_norm(tr.vectors[i] + lower));
      CHECK(err <= 1e-6);
    }
  }
  SUBCASE("a disk that loses the branch raises BranchLossError") {
    const std::vector<double> t = {0.0, 1.0};
    CHECK_THROWS_AS(track_branch(*sq, sys.vectors.col(0),
                                 [&](double s) -> BoundaryField { return omega0 + s * 30.0 * bump; },
                                 t, Disk{sys.values(0), 0.5}),
                    BranchLossError);
  }
}

TEST_CASE("eigenvalues decrease as the impedance increases") {
  // With the interior normal, B_omega = -omega w_S, so omega_a <= omega_b
  // pointwise gives lambda_k(omega_b) <= lambda_k(omega_a) (min-max).
  for (const auto& model : {interval_model(201), rectangle_model(1.0, 1.0, 15, 15)}) {
    Rng rng(5, "monotone");
    for (int i = 0; i < 5; ++i) {
      BoundaryField a(model->bmesh.size()), b(model->bmesh.size());
      for (int p = 0; p < a.size(); ++p) {
        a(p) = rng.uniform(-1.0, 1.0);
        b(p) = a(p) + rng.uniform(0.0, 1.0);
      }
      const Eigen::VectorXd la = model->solve(a, 8).values, lb = model->solve(b, 8).values;
      for (int k = 0; k < 8; ++k) CHECK(lb(k) <= la(k) + 1e-10);
    }
  }
}
