#include "robinspec/geometry.hpp"

#include "robinspec/errors.hpp"

#include <cmath>
#include <string>

namespace robinspec {

namespace {

constexpr int kMinNodesPerAxis = 3;

Eigen::VectorXd trapezoid_weights(int n, double h) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, h);
  w(0) = w(n - 1) = 0.5 * h;
  return w;
}

std::pair<Mesh, BoundaryMesh> build_interval(const DomainSpec& spec) {
  if (!(spec.length > 0.0)) throw ConfigError("domain.length must be positive");
  if (spec.n < kMinNodesPerAxis)
    throw ConfigError("domain.n must be at least " + std::to_string(kMinNodesPerAxis));

  Mesh mesh;
  mesh.dim = 1;
  mesh.nx = spec.n;
  mesh.ny = 1;
  mesh.hx = spec.length / (spec.n - 1);
  mesh.coords.resize(spec.n, 1);
  for (int i = 0; i < spec.n; ++i) mesh.coords(i, 0) = i * mesh.hx;
  mesh.coords(spec.n - 1, 0) = spec.length;
  mesh.vol_weights = trapezoid_weights(spec.n, mesh.hx);

  BoundaryMesh bmesh;
  bmesh.dim = 1;
  bmesh.nodes = {0, spec.n - 1};
  bmesh.weights = Eigen::Vector2d(1.0, 1.0);
  bmesh.arc = Eigen::Vector2d(0.0, spec.length);
  bmesh.inward = {1, spec.n - 2};
  bmesh.perimeter = 2.0;
  return {std::move(mesh), std::move(bmesh)};
}

std::pair<Mesh, BoundaryMesh> build_rectangle(const DomainSpec& spec) {
  if (!(spec.a > 0.0) || !(spec.b > 0.0))
    throw ConfigError("domain side lengths a, b must be positive");
  if (spec.nx < kMinNodesPerAxis || spec.ny < kMinNodesPerAxis)
    throw ConfigError("domain.nx and domain.ny must be at least " +
                      std::to_string(kMinNodesPerAxis));

  Mesh mesh;
  mesh.dim = 2;
  mesh.nx = spec.nx;
  mesh.ny = spec.ny;
  mesh.hx = spec.a / (spec.nx - 1);
  mesh.hy = spec.b / (spec.ny - 1);
  const Eigen::VectorXd wx = trapezoid_weights(spec.nx, mesh.hx);
  const Eigen::VectorXd wy = trapezoid_weights(spec.ny, mesh.hy);
  const int n = spec.nx * spec.ny;
  mesh.coords.resize(n, 2);
  mesh.vol_weights.resize(n);
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) {
      const int id = mesh.index(i, j);
      mesh.coords(id, 0) = (i == spec.nx - 1) ? spec.a : i * mesh.hx;
      mesh.coords(id, 1) = (j == spec.ny - 1) ? spec.b : j * mesh.hy;
      mesh.vol_weights(id) = wx(i) * wy(j);
    }
  }

  // Counterclockwise cycle from (0,0); each corner opens the edge it starts.
  BoundaryMesh bmesh;
  bmesh.dim = 2;
  const int count = 2 * (spec.nx - 1) + 2 * (spec.ny - 1);
  bmesh.nodes.reserve(count);
  bmesh.inward.reserve(count);
  std::vector<double> step_after;  // length of the segment leaving each node
  step_after.reserve(count);
  for (int i = 0; i < spec.nx - 1; ++i) {
    bmesh.nodes.push_back(mesh.index(i, 0));
    bmesh.inward.push_back(mesh.index(i, 1));
    step_after.push_back(mesh.hx);
  }
  for (int j = 0; j < spec.ny - 1; ++j) {
    bmesh.nodes.push_back(mesh.index(spec.nx - 1, j));
    bmesh.inward.push_back(mesh.index(spec.nx - 2, j));
    step_after.push_back(mesh.hy);
  }
  for (int i = spec.nx - 1; i > 0; --i) {
    bmesh.nodes.push_back(mesh.index(i, spec.ny - 1));
    bmesh.inward.push_back(mesh.index(i, spec.ny - 2));
    step_after.push_back(mesh.hx);
  }
  for (int j = spec.ny - 1; j > 0; --j) {
    bmesh.nodes.push_back(mesh.index(0, j));
    bmesh.inward.push_back(mesh.index(1, j));
    step_after.push_back(mesh.hy);
  }

  bmesh.weights.resize(count);
  bmesh.arc.resize(count);
  double s = 0.0;
  for (int p = 0; p < count; ++p) {
    const double before = step_after[(p + count - 1) % count];
    bmesh.weights(p) = 0.5 * (before + step_after[p]);
    bmesh.arc(p) = s;
    s += step_after[p];
  }
  bmesh.perimeter = 2.0 * (spec.a + spec.b);
  return {std::move(mesh), std::move(bmesh)};
}

}  // namespace

DomainSpec DomainSpec::interval(double length, int n) {
  DomainSpec spec;
  spec.kind = DomainKind::Interval;
  spec.length = length;
  spec.n = n;
  return spec;
}

DomainSpec DomainSpec::rectangle(double a, double b, int nx, int ny) {
  DomainSpec spec;
  spec.kind = DomainKind::Rectangle;
  spec.a = a;
  spec.b = b;
  spec.nx = nx;
  spec.ny = ny;
  return spec;
}

std::pair<Mesh, BoundaryMesh> build_mesh(const DomainSpec& spec) {
  return spec.kind == DomainKind::Interval ? build_interval(spec) : build_rectangle(spec);
}

SigmaPatch make_sigma(const BoundaryMesh& bmesh, double arc_start, double arc_end) {
  // Interval endpoints sit at arc coordinates 0 and L.
  const double limit = bmesh.dim == 1 ? bmesh.arc(bmesh.size() - 1) : bmesh.perimeter;
  if (!(arc_start >= 0.0) || !(arc_start < arc_end) || arc_end > limit * (1 + 1e-12))
    throw ContractError("sigma arc range must satisfy 0 <= start < end <= perimeter");

  const double tol = 1e-9 * bmesh.perimeter / std::max(1, bmesh.size());
  int first = -1, last = -1;
  for (int p = 0; p < bmesh.size(); ++p) {
    const double s = bmesh.arc(p);
    if (s >= arc_start - tol && s <= arc_end + tol) {
      if (first < 0) first = p;
      last = p;
    }
  }
  if (first < 0) throw PatchTooSmallError("sigma arc range contains no boundary nodes");

  SigmaPatch patch;
  if (bmesh.dim == 1) {
    patch.first = first;
    patch.last = last;
    patch.margin = 0;
    return patch;
  }
  patch.margin = 1;
  patch.first = first + 1;
  patch.last = last - 1;
  if (patch.size() < 1) throw PatchTooSmallError("sigma patch is empty after margins");
  return patch;
}

double integrate_boundary(const BoundaryMesh& bmesh, const Eigen::VectorXd& f) {
  if (f.size() != bmesh.weights.size())
    throw ContractError("boundary field length does not match the boundary mesh");
  return f.dot(bmesh.weights);
}

BoundaryMesh with_conformal(const BoundaryMesh& bmesh, const Eigen::VectorXd& c) {
  BoundaryMesh out = bmesh;
  for (int p = 0; p < bmesh.size(); ++p) {
    const double cp = c(bmesh.nodes[p]);
    if (!(cp > 0.0)) throw ConfigError("conformal factor c must be positive");
    if (bmesh.dim == 2) out.weights(p) *= std::sqrt(cp);
  }
  return out;
}

Eigen::VectorXd sigma_arc(const BoundaryMesh& bmesh, const SigmaPatch& sigma) {
  return bmesh.arc.segment(sigma.first, sigma.size());
}

Eigen::VectorXd restrict_to(const SigmaPatch& sigma, const Eigen::VectorXd& boundary_values) {
  if (sigma.last >= boundary_values.size())
    throw ContractError("boundary vector shorter than the sigma patch");
  return boundary_values.segment(sigma.first, sigma.size());
}

Eigen::VectorXd extend_from(const SigmaPatch& sigma, const Eigen::VectorXd& patch_values,
                            int boundary_size) {
  if (patch_values.size() != sigma.size())
    throw ContractError("patch vector length does not match the sigma patch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(boundary_size);
  out.segment(sigma.first, sigma.size()) = patch_values;
  return out;
}

}  // namespace robinspec
