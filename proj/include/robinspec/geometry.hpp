#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace robinspec {

enum class DomainKind { Interval, Rectangle };

/// Flat desk-scale domain: the interval [0, L] or the rectangle [0, a] x [0, b].
struct DomainSpec {
  DomainKind kind = DomainKind::Rectangle;
  double length = 1.0;  // interval
  int n = 0;            // interval node count (endpoints included)
  double a = 1.0, b = 1.0;
  int nx = 0, ny = 0;

  static DomainSpec interval(double length, int n);
  static DomainSpec rectangle(double a, double b, int nx, int ny);
};

/// Tensor grid with trapezoidal volume weights. Node (i, j) of a rectangle has
/// index j * nx + i; the interval uses ny == 1.
struct Mesh {
  int dim = 0;
  int nx = 0, ny = 1;
  double hx = 0.0, hy = 0.0;
  Eigen::MatrixXd coords;       // nodes x dim
  Eigen::VectorXd vol_weights;  // w_V

  int size() const { return static_cast<int>(vol_weights.size()); }
  int index(int i, int j) const { return j * nx + i; }
};

/// Boundary nodes in traversal order. For a rectangle this is one closed,
/// counterclockwise cycle starting at corner (0, 0); for the interval it is
/// the two endpoints.
struct BoundaryMesh {
  int dim = 0;
  std::vector<int> nodes;         // mesh node index per boundary position
  Eigen::VectorXd weights;        // w_S (metric factor included when attached)
  Eigen::VectorXd arc;            // cumulative arc-length coordinate s
  std::vector<int> inward;        // mesh node one step along the interior normal
  double perimeter = 0.0;         // |dOmega| (counting measure for the interval)

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Contiguous inclusive range [first, last] of boundary positions.
struct SigmaPatch {
  int first = 0;
  int last = -1;
  int margin = 1;

  int size() const { return last - first + 1; }
  bool contains(int pos) const { return pos >= first && pos <= last; }
};

std::pair<Mesh, BoundaryMesh> build_mesh(const DomainSpec& spec);

/// Boundary positions with arc coordinate in [arc_start, arc_end], one margin
/// node dropped at each end (margins are waived for the interval).
SigmaPatch make_sigma(const BoundaryMesh& bmesh, double arc_start, double arc_end);

/// Sum of f_i * w_S,i over all boundary nodes.
double integrate_boundary(const BoundaryMesh& bmesh, const Eigen::VectorXd& f);

/// Copy of `bmesh` whose weights carry the boundary length element sqrt(c).
BoundaryMesh with_conformal(const BoundaryMesh& bmesh, const Eigen::VectorXd& c);

/// Arc coordinates of the patch nodes.
Eigen::VectorXd sigma_arc(const BoundaryMesh& bmesh, const SigmaPatch& sigma);

/// Patch restriction of a boundary vector, and its adjoint (zero extension).
Eigen::VectorXd restrict_to(const SigmaPatch& sigma, const Eigen::VectorXd& boundary_values);
Eigen::VectorXd extend_from(const SigmaPatch& sigma, const Eigen::VectorXd& patch_values,
                            int boundary_size);

}  // namespace robinspec
