#pragma once

#include "robinspec/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace robinspec {

/// One value per mesh node (q, c).
using ScalarField = Eigen::VectorXd;
/// One value per boundary position (omega, omega_0, perturbation directions).
using BoundaryField = Eigen::VectorXd;

/// Seeded stream. The engine is std::mt19937_64, whose output sequence is fixed
/// by the standard; conversion to doubles is done here so results do not depend
/// on the library's distribution implementations.
class Rng {
public:
  Rng(std::uint64_t seed, std::string_view label);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

/// FNV-1a over raw bytes; stable across platforms with the same endianness.
std::uint64_t fnv1a(const void* data, std::size_t bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t hash_field(const Eigen::VectorXd& values);

ScalarField constant_field(const Mesh& mesh, double value);
/// height * exp(-|x - center|^2 / (2 width^2)).
ScalarField gaussian_field(const Mesh& mesh, const Eigen::VectorXd& center, double width,
                           double height);

BoundaryField constant_boundary(const BoundaryMesh& bmesh, double value);

/// exp(1 - 1/(1 - t^2)) for |t| < 1, else 0; peak value 1 at t = 0.
double smooth_profile(double t);

/// Smooth bump of the given peak, centred at arc coordinate `center`, zero at
/// every node outside the patch.
BoundaryField smooth_bump(const BoundaryMesh& bmesh, const SigmaPatch& sigma, double center,
                          double half_width, double amplitude);

enum class BumpShape { Hat, Smooth };

struct BumpBasis {
  std::vector<BoundaryField> bumps;
  std::vector<double> centers;
  std::vector<double> widths;  // half-widths in arc length

  int size() const { return static_cast<int>(bumps.size()); }
  /// J x |Sigma| matrix of bump values at the patch nodes.
  Eigen::MatrixXd collocation(const SigmaPatch& sigma) const;
};

/// J equispaced bumps over the patch with overlapping supports. Hats form an
/// exact partition of unity; smooth bumps are normalised to one.
BumpBasis bump_basis(const BoundaryMesh& bmesh, const SigmaPatch& sigma, int count,
                     BumpShape shape);

/// Smooth bump with random centre and width inside the patch, rescaled to
/// sup-norm `amplitude`. Deterministic in (seed, label).
BoundaryField random_bump(const BoundaryMesh& bmesh, const SigmaPatch& sigma,
                          std::uint64_t seed, double amplitude,
                          std::string_view label = "random_bump");

}  // namespace robinspec
