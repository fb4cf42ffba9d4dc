#include "robinspec/fields.hpp"

#include "robinspec/errors.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <string>

namespace robinspec {

Rng::Rng(std::uint64_t seed, std::string_view label) {
  const std::uint64_t tag = fnv1a(label.data(), label.size());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  engine_.seed(seq);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t basis) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = basis;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_field(const Eigen::VectorXd& values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values(i) == 0.0 ? 0.0 : values(i);  // fold -0.0
    h = fnv1a(&v, sizeof v, h);
  }
  return h;
}

ScalarField constant_field(const Mesh& mesh, double value) {
  return ScalarField::Constant(mesh.size(), value);
}

ScalarField gaussian_field(const Mesh& mesh, const Eigen::VectorXd& center, double width,
                           double height) {
  if (center.size() != mesh.dim) throw ConfigError("gaussian_bump center has wrong dimension");
  if (!(width > 0.0)) throw ConfigError("gaussian_bump width must be positive");
  ScalarField f(mesh.size());
  for (int i = 0; i < mesh.size(); ++i) {
    const double r2 = (mesh.coords.row(i).transpose() - center).squaredNorm();
    f(i) = height * std::exp(-r2 / (2.0 * width * width));
  }
  return f;
}

BoundaryField constant_boundary(const BoundaryMesh& bmesh, double value) {
  return BoundaryField::Constant(bmesh.size(), value);
}

double smooth_profile(double t) {
  const double u = 1.0 - t * t;
  return u > 0.0 ? std::exp(1.0 - 1.0 / u) : 0.0;
}

BoundaryField smooth_bump(const BoundaryMesh& bmesh, const SigmaPatch& sigma, double center,
                          double half_width, double amplitude) {
  if (!(half_width > 0.0)) throw ConfigError("bump half-width must be positive");
  BoundaryField f = BoundaryField::Zero(bmesh.size());
  for (int p = sigma.first; p <= sigma.last; ++p)
    f(p) = amplitude * smooth_profile((bmesh.arc(p) - center) / half_width);
  return f;
}

Eigen::MatrixXd BumpBasis::collocation(const SigmaPatch& sigma) const {
  Eigen::MatrixXd g(size(), sigma.size());
  for (int j = 0; j < size(); ++j) g.row(j) = bumps[j].segment(sigma.first, sigma.size());
  return g;
}

BumpBasis bump_basis(const BoundaryMesh& bmesh, const SigmaPatch& sigma, int count,
                     BumpShape shape) {
  const int m = sigma.size();
  BumpBasis basis;
  if (m == 1) {
    if (count != 1) throw ConfigError("a single-node patch admits exactly one bump");
    BoundaryField f = BoundaryField::Zero(bmesh.size());
    f(sigma.first) = 1.0;
    basis.bumps.push_back(std::move(f));
    basis.centers.push_back(bmesh.arc(sigma.first));
    basis.widths.push_back(0.0);
    return basis;
  }
  if (count < 2 || count > m)
    throw ConfigError("bump count J must satisfy 2 <= J <= |Sigma| (got " +
                      std::to_string(count) + ")");

  const double s0 = bmesh.arc(sigma.first);
  const double span = bmesh.arc(sigma.last) - s0;
  const double spacing = span / (count - 1);
  for (int j = 0; j < count; ++j) {
    basis.centers.push_back(s0 + j * spacing);
    basis.widths.push_back(shape == BumpShape::Hat ? spacing : 1.5 * spacing);
  }

  for (int j = 0; j < count; ++j) {
    BoundaryField f = BoundaryField::Zero(bmesh.size());
    for (int p = sigma.first; p <= sigma.last; ++p) {
      const double t = (bmesh.arc(p) - basis.centers[j]) / basis.widths[j];
      f(p) = shape == BumpShape::Hat ? std::max(0.0, 1.0 - std::abs(t)) : smooth_profile(t);
    }
    basis.bumps.push_back(std::move(f));
  }
  if (shape == BumpShape::Smooth) {
    for (int p = sigma.first; p <= sigma.last; ++p) {
      double total = 0.0;
      for (const auto& f : basis.bumps) total += f(p);
      for (auto& f : basis.bumps) f(p) /= total;
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis.collocation(sigma).transpose());
  if (qr.rank() < count) throw BasisError("bump collocation matrix is rank deficient");
  return basis;
}

BoundaryField random_bump(const BoundaryMesh& bmesh, const SigmaPatch& sigma,
                          std::uint64_t seed, double amplitude, std::string_view label) {
  if (!(amplitude > 0.0)) throw ContractError("random_bump amplitude must be positive");
  BoundaryField f = BoundaryField::Zero(bmesh.size());
  if (sigma.size() < 3) {
    f.segment(sigma.first, sigma.size()).setConstant(amplitude);
    return f;
  }

  Rng rng(seed, label);
  const double s0 = bmesh.arc(sigma.first);
  const double s1 = bmesh.arc(sigma.last);
  const double span = s1 - s0;
  const double step = span / (sigma.size() - 1);
  const double min_width = std::min(0.5 * span, std::max(0.1 * span, 2.0 * step));
  const double half_width = rng.uniform(min_width, std::max(min_width, 0.4 * span));
  const double center = rng.uniform(s0 + half_width, s1 - half_width);

  f = smooth_bump(bmesh, sigma, center, half_width, 1.0);
  Eigen::Index peak = 0;
  const double top = f.maxCoeff(&peak);
  if (!(top > 0.0)) {
    // Support fell between nodes; fall back to the node nearest the centre.
    (bmesh.arc.segment(sigma.first, sigma.size()).array() - center).abs().minCoeff(&peak);
    peak += sigma.first;
    f(peak) = 1.0;
  } else {
    f *= amplitude / top;
  }
  f(peak) = amplitude;
  return f;
}

}  // namespace robinspec
