#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tetherfem/geometry.hpp"

namespace tetherfem {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
/// Second derivatives of a 2-vector field: hess[i](j, k) = d^2 u_i / dx_j dx_k.
using Hess = std::array<Mat2, 2>;

/// Quadrature on the reference triangle {(0,0), (1,0), (0,1)} or on [0, 1].
/// Cell points are reference coordinates (xi, eta); barycentrics are (1 - xi - eta, xi, eta).
struct Quadrature {
  std::vector<Point> points;
  std::vector<double> weights;
  int degree = 0;

  int size() const { return static_cast<int>(weights.size()); }
};

/// Collapsed Gauss rule exact for polynomials of total degree <= `exactness_degree` (<= 20).
Quadrature cell_rule(int exactness_degree);
/// Gauss-Legendre rule on [0, 1]; the abscissa is stored in points[i].x().
Quadrature edge_rule(int exactness_degree);

/// Nodal Lagrange basis of P_k on the reference triangle, built from a monomial Vandermonde.
class LagrangeBasis {
 public:
  explicit LagrangeBasis(int degree);

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Point>& nodes() const { return nodes_; }
  /// Integer barycentric multiplicities of node a (sum = degree; the centroid for degree 0).
  const std::array<int, 3>& lattice(int a) const { return lattice_[a]; }

  Eigen::VectorXd values(const Point& xi) const;
  /// size() x 2 reference gradients.
  Eigen::MatrixXd gradients(const Point& xi) const;
  /// size() x 3 reference second derivatives (xx, xy, yy).
  Eigen::MatrixXd hessians(const Point& xi) const;

 private:
  int degree_;
  std::vector<Point> nodes_;
  std::vector<std::array<int, 3>> lattice_;
  std::vector<std::array<int, 2>> monomials_;
  Eigen::MatrixXd coeffs_;  // column a: monomial coefficients of basis function a
};

/// Affine map x = origin + B xi for one triangle.
struct ElementMap {
  Point origin;
  Mat2 jacobian;
  Mat2 inverse;
  double det = 0.0;

  Point to_physical(const Point& xi) const { return origin + jacobian * xi; }
  Point to_reference(const Point& x) const { return inverse * (x - origin); }
  /// Physical gradients (rows) from reference gradients (rows).
  Eigen::MatrixXd physical_gradients(const Eigen::MatrixXd& ref) const { return ref * inverse; }
  /// Physical second derivatives (xx, xy, yy) from reference ones.
  Eigen::MatrixXd physical_hessians(const Eigen::MatrixXd& ref) const;
};

ElementMap element_map(const Mesh& mesh, int t);

/// Continuous Lagrange space of degree q over a mesh, scalar node numbering. Vector fields
/// interleave (u_x, u_y) per node.
class Space {
 public:
  Space(std::shared_ptr<const Mesh> mesh, int degree);

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const EdgeSet& edges() const { return edges_; }
  const LagrangeBasis& basis() const { return basis_; }
  int degree() const { return basis_.degree(); }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_dofs() const { return 2 * num_nodes(); }
  int nodes_per_element() const { return basis_.size(); }

  std::span<const int> element_nodes(int t) const {
    return {element_nodes_.data() + static_cast<std::size_t>(t) * basis_.size(),
            static_cast<std::size_t>(basis_.size())};
  }
  const Point& node(int g) const { return nodes_[g]; }
  /// kInteriorTag for interior nodes, otherwise the tag of the boundary edge or vertex.
  int node_tag(int g) const { return node_tags_[g]; }
  std::vector<int> boundary_nodes() const;
  const ElementMap& map(int t) const { return maps_[t]; }

 private:
  std::shared_ptr<const Mesh> mesh_;
  EdgeSet edges_;
  LagrangeBasis basis_;
  std::vector<int> element_nodes_;
  std::vector<Point> nodes_;
  std::vector<int> node_tags_;
  std::vector<char> boundary_;
  std::vector<ElementMap> maps_;
};

/// Vector displacement u_h in V_h^q(Omega)^2.
struct Field {
  std::shared_ptr<const Space> space;
  Eigen::VectorXd coeffs;  // length 2 * num_nodes, interleaved

  explicit Field(std::shared_ptr<const Space> s)
      : space(std::move(s)), coeffs(Eigen::VectorXd::Zero(space->num_dofs())) {}
  Field(std::shared_ptr<const Space> s, Eigen::VectorXd c);

  /// n_loc x 2 matrix of local coefficients on triangle t.
  Eigen::MatrixXd local(int t) const;
};

/// Per-triangle polynomials of degree k with m components, in the reference Lagrange basis.
struct BrokenField {
  std::shared_ptr<const Mesh> mesh;
  int degree = 0;
  int components = 1;
  /// Row t * n_loc + a holds the m component values at local node a of triangle t.
  Eigen::MatrixXd coeffs;

  BrokenField(std::shared_ptr<const Mesh> m, int k, int comps);
  int nodes_per_element() const { return (degree + 1) * (degree + 2) / 2; }
  auto block(int t) { return coeffs.middleRows(static_cast<Eigen::Index>(t) * nodes_per_element(), nodes_per_element()); }
  auto block(int t) const { return coeffs.middleRows(static_cast<Eigen::Index>(t) * nodes_per_element(), nodes_per_element()); }
};

using VectorFunction = std::function<Vec2(const Point&)>;

Field interpolate(std::shared_ptr<const Space> space, const VectorFunction& g);

/// Point evaluation on triangle t. Points must lie in the closed triangle.
std::vector<Vec2> eval(const Field& u, int t, std::span<const Point> points);
std::vector<Mat2> eval_grad(const Field& u, int t, std::span<const Point> points);
std::vector<Hess> eval_hess(const Field& u, int t, std::span<const Point> points);

/// Index of a triangle containing x (closed, with a small tolerance), or -1. Linear scan.
int locate(const Space& space, const Point& x);

/// Values of a broken field at a physical point of triangle t (length m).
Eigen::VectorXd eval_broken(const BrokenField& f, int t, const Point& x);

/// Elementwise L^2 projection of g onto P_k (a discontinuous field in general).
BrokenField project_broken(std::shared_ptr<const Mesh> mesh, int degree,
                           const std::function<Eigen::VectorXd(const Point&)>& g, int components);

/// Node-averaging operator Q: each shared Lagrange node receives the mean of the adjacent
/// element values. Returns num_nodes x m values; throws InputError on a degree mismatch.
Eigen::MatrixXd reconstruct(const Space& space, const BrokenField& broken);
/// Two-component convenience form returning a continuous Field.
Field reconstruct_field(std::shared_ptr<const Space> space, const BrokenField& broken);

/// Integral of f . g over Omega for broken fields on the same mesh and layout.
double broken_inner(const BrokenField& f, const BrokenField& g);

}  // namespace tetherfem
