#include "tetherfem/space.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "tetherfem/errors.hpp"

namespace tetherfem {

namespace {

// Gauss-Legendre abscissae/weights on [0, 1] with n points.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double p = std::legendre(n, z);
      const double pm = n > 1 ? std::legendre(n - 1, z) : 1.0;
      dp = n * (z * p - pm) / (z * z - 1.0);
      const double dz = p / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double p = std::legendre(n, z);
    const double pm = n > 1 ? std::legendre(n - 1, z) : 1.0;
    dp = n * (z * p - pm) / (z * z - 1.0);
    x[i] = 0.5 * (1.0 - z);
    w[i] = 1.0 / ((1.0 - z * z) * dp * dp);  // 2/((1-z^2) P'^2), halved for [0, 1]
  }
}

double ipow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

}  // namespace

Quadrature cell_rule(int exactness_degree) {
  if (exactness_degree < 0 || exactness_degree > 20)
    throw InputError("cell quadrature degree must be in [0, 20]");
  const int nu = (exactness_degree + 3) / 2;  // ceil((d + 2) / 2)
  const int nv = (exactness_degree + 2) / 2;  // ceil((d + 1) / 2)
  std::vector<double> xu, wu, xv, wv;
  gauss_legendre(nu, xu, wu);
  gauss_legendre(nv, xv, wv);
  Quadrature q;
  q.degree = exactness_degree;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      q.points.emplace_back(xu[i], xv[j] * (1.0 - xu[i]));
      q.weights.push_back(wu[i] * wv[j] * (1.0 - xu[i]));
    }
  return q;
}

Quadrature edge_rule(int exactness_degree) {
  if (exactness_degree < 0 || exactness_degree > 20)
    throw InputError("edge quadrature degree must be in [0, 20]");
  const int n = exactness_degree / 2 + 1;
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  Quadrature q;
  q.degree = exactness_degree;
  for (int i = 0; i < n; ++i) {
    q.points.emplace_back(x[i], 0.0);
    q.weights.push_back(w[i]);
  }
  return q;
}

LagrangeBasis::LagrangeBasis(int degree) : degree_(degree) {
  if (degree < 0) throw InputError("Lagrange degree must be non-negative");
  if (degree == 0) {
    nodes_.emplace_back(1.0 / 3.0, 1.0 / 3.0);
    lattice_.push_back({0, 0, 0});
  } else {
    lattice_ = {{degree, 0, 0}, {0, degree, 0}, {0, 0, degree}};
    for (int j = 0; j <= degree; ++j)
      for (int i = 0; i + j <= degree; ++i) {
        const std::array<int, 3> b{degree - i - j, i, j};
        if (b[0] == degree || b[1] == degree || b[2] == degree) continue;
        lattice_.push_back(b);
      }
    for (const auto& b : lattice_) nodes_.emplace_back(double(b[1]) / degree, double(b[2]) / degree);
  }
  for (int a = 0; a <= degree; ++a)
    for (int b = 0; a + b <= degree; ++b) monomials_.push_back({a, b});
  const int n = size();
  Eigen::MatrixXd vander(n, n);
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < n; ++m)
      vander(i, m) = ipow(nodes_[i].x(), monomials_[m][0]) * ipow(nodes_[i].y(), monomials_[m][1]);
  coeffs_ = vander.inverse();
}

Eigen::VectorXd LagrangeBasis::values(const Point& xi) const {
  Eigen::VectorXd mono(size());
  for (int m = 0; m < size(); ++m)
    mono[m] = ipow(xi.x(), monomials_[m][0]) * ipow(xi.y(), monomials_[m][1]);
  return coeffs_.transpose() * mono;
}

Eigen::MatrixXd LagrangeBasis::gradients(const Point& xi) const {
  Eigen::MatrixXd mono = Eigen::MatrixXd::Zero(size(), 2);
  for (int m = 0; m < size(); ++m) {
    const auto [a, b] = monomials_[m];
    if (a > 0) mono(m, 0) = a * ipow(xi.x(), a - 1) * ipow(xi.y(), b);
    if (b > 0) mono(m, 1) = b * ipow(xi.x(), a) * ipow(xi.y(), b - 1);
  }
  return coeffs_.transpose() * mono;
}

Eigen::MatrixXd LagrangeBasis::hessians(const Point& xi) const {
  Eigen::MatrixXd mono = Eigen::MatrixXd::Zero(size(), 3);
  for (int m = 0; m < size(); ++m) {
    const auto [a, b] = monomials_[m];
    if (a > 1) mono(m, 0) = a * (a - 1) * ipow(xi.x(), a - 2) * ipow(xi.y(), b);
    if (a > 0 && b > 0) mono(m, 1) = a * b * ipow(xi.x(), a - 1) * ipow(xi.y(), b - 1);
    if (b > 1) mono(m, 2) = b * (b - 1) * ipow(xi.x(), a) * ipow(xi.y(), b - 2);
  }
  return coeffs_.transpose() * mono;
}

Eigen::MatrixXd ElementMap::physical_hessians(const Eigen::MatrixXd& ref) const {
  Eigen::MatrixXd out(ref.rows(), 3);
  for (Eigen::Index a = 0; a < ref.rows(); ++a) {
    Mat2 h;
    h << ref(a, 0), ref(a, 1), ref(a, 1), ref(a, 2);
    const Mat2 p = inverse.transpose() * h * inverse;
    out(a, 0) = p(0, 0);
    out(a, 1) = p(0, 1);
    out(a, 2) = p(1, 1);
  }
  return out;
}

ElementMap element_map(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  ElementMap m;
  m.origin = mesh.vertices[tri[0]];
  m.jacobian.col(0) = mesh.vertices[tri[1]] - m.origin;
  m.jacobian.col(1) = mesh.vertices[tri[2]] - m.origin;
  m.det = m.jacobian.determinant();
  m.inverse = m.jacobian.inverse();
  return m;
}

Space::Space(std::shared_ptr<const Mesh> mesh, int degree)
    : mesh_(std::move(mesh)), edges_(build_edges(*mesh_)), basis_(degree) {
  if (degree < 1) throw InputError("continuous Lagrange space needs degree >= 1");
  const Mesh& m = *mesh_;
  const int n_loc = basis_.size();
  element_nodes_.resize(static_cast<std::size_t>(m.num_triangles()) * n_loc);
  maps_.reserve(m.num_triangles());

  using Key = std::array<std::pair<int, int>, 3>;
  std::map<Key, int> index;
  for (int t = 0; t < m.num_triangles(); ++t) {
    maps_.push_back(element_map(m, t));
    const auto& tri = m.triangles[t];
    for (int a = 0; a < n_loc; ++a) {
      const auto& b = basis_.lattice(a);
      Key key{std::pair{-1, 0}, std::pair{-1, 0}, std::pair{-1, 0}};
      int nz = 0;
      for (int v = 0; v < 3; ++v)
        if (b[v] > 0) key[nz++] = {tri[v], b[v]};
      std::sort(key.begin(), key.begin() + nz);
      auto [it, inserted] = index.try_emplace(key, num_nodes());
      if (inserted) {
        Point x = Point::Zero();
        for (int v = 0; v < 3; ++v) x += (double(b[v]) / degree) * m.vertices[tri[v]];
        nodes_.push_back(x);
        int tag = kInteriorTag;
        if (nz == 1) {
          for (int v = 0; v < 3; ++v)
            if (b[v] > 0) tag = m.vertex_tags[tri[v]];
        }
        node_tags_.push_back(tag);
      }
      element_nodes_[static_cast<std::size_t>(t) * n_loc + a] = it->second;
    }
  }

  // Nodes on boundary edges inherit the edge tag (vertices keep their own tag).
  boundary_.assign(nodes_.size(), 0);
  for (const auto& e : edges_.boundary) {
    const int t = e.element;
    for (int a = 0; a < n_loc; ++a) {
      if (basis_.lattice(a)[e.local] != 0) continue;
      const int g = element_nodes_[static_cast<std::size_t>(t) * n_loc + a];
      boundary_[g] = 1;
      const auto& b = basis_.lattice(a);
      const bool is_vertex = (b[0] == degree || b[1] == degree || b[2] == degree);
      if (!is_vertex) node_tags_[g] = e.tag;
    }
  }
}

std::vector<int> Space::boundary_nodes() const {
  std::vector<int> out;
  for (int g = 0; g < num_nodes(); ++g)
    if (boundary_[g]) out.push_back(g);
  return out;
}

Field::Field(std::shared_ptr<const Space> s, Eigen::VectorXd c) : space(std::move(s)), coeffs(std::move(c)) {
  if (coeffs.size() != space->num_dofs())
    throw InputError("field coefficient length does not match the space");
}

Eigen::MatrixXd Field::local(int t) const {
  const auto nodes = space->element_nodes(t);
  Eigen::MatrixXd u(nodes.size(), 2);
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    u(a, 0) = coeffs[2 * nodes[a]];
    u(a, 1) = coeffs[2 * nodes[a] + 1];
  }
  return u;
}

BrokenField::BrokenField(std::shared_ptr<const Mesh> m, int k, int comps)
    : mesh(std::move(m)), degree(k), components(comps) {
  coeffs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mesh->num_triangles()) * nodes_per_element(), comps);
}

Field interpolate(std::shared_ptr<const Space> space, const VectorFunction& g) {
  Field u(space);
  for (int n = 0; n < space->num_nodes(); ++n) {
    const Vec2 v = g(space->node(n));
    if (!v.allFinite()) throw InputError("interpolated function is not finite at a node");
    u.coeffs[2 * n] = v.x();
    u.coeffs[2 * n + 1] = v.y();
  }
  return u;
}

namespace {

Point checked_reference(const ElementMap& map, const Point& x) {
  const Point xi = map.to_reference(x);
  constexpr double tol = 1e-10;
  if (xi.x() < -tol || xi.y() < -tol || xi.x() + xi.y() > 1.0 + tol)
    throw InputError("evaluation point lies outside the triangle");
  return xi;
}

}  // namespace

int locate(const Space& space, const Point& x) {
  constexpr double tol = 1e-12;
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const Point xi = space.map(t).to_reference(x);
    if (xi.x() >= -tol && xi.y() >= -tol && xi.x() + xi.y() <= 1.0 + tol) return t;
  }
  return -1;
}

std::vector<Vec2> eval(const Field& u, int t, std::span<const Point> points) {
  const Eigen::MatrixXd local = u.local(t);
  const ElementMap& map = u.space->map(t);
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const auto& x : points) {
    const Eigen::VectorXd phi = u.space->basis().values(checked_reference(map, x));
    out.emplace_back(local.transpose() * phi);
  }
  return out;
}

std::vector<Mat2> eval_grad(const Field& u, int t, std::span<const Point> points) {
  const Eigen::MatrixXd local = u.local(t);
  const ElementMap& map = u.space->map(t);
  std::vector<Mat2> out;
  out.reserve(points.size());
  for (const auto& x : points) {
    const Eigen::MatrixXd g = map.physical_gradients(u.space->basis().gradients(checked_reference(map, x)));
    out.emplace_back(local.transpose() * g);
  }
  return out;
}

std::vector<Hess> eval_hess(const Field& u, int t, std::span<const Point> points) {
  const Eigen::MatrixXd local = u.local(t);
  const ElementMap& map = u.space->map(t);
  std::vector<Hess> out;
  out.reserve(points.size());
  for (const auto& x : points) {
    const Eigen::MatrixXd h = map.physical_hessians(u.space->basis().hessians(checked_reference(map, x)));
    Hess hs;
    for (int i = 0; i < 2; ++i) {
      const Eigen::Vector3d c = h.transpose() * local.col(i);
      hs[i] << c[0], c[1], c[1], c[2];
    }
    out.push_back(hs);
  }
  return out;
}

Eigen::VectorXd eval_broken(const BrokenField& f, int t, const Point& x) {
  const LagrangeBasis basis(f.degree);
  const ElementMap map = element_map(*f.mesh, t);
  const Eigen::VectorXd phi = basis.values(checked_reference(map, x));
  return f.block(t).transpose() * phi;
}

BrokenField project_broken(std::shared_ptr<const Mesh> mesh, int degree,
                           const std::function<Eigen::VectorXd(const Point&)>& g, int components) {
  BrokenField out(mesh, degree, components);
  const LagrangeBasis basis(degree);
  const Quadrature rule = cell_rule(std::min(20, 2 * degree + 8));
  const int n = basis.size();
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const ElementMap map = element_map(*mesh, t);
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, components);
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::VectorXd phi = basis.values(rule.points[q]);
      const double w = rule.weights[q] * map.det;
      mass += w * phi * phi.transpose();
      rhs += w * phi * g(map.to_physical(rule.points[q])).transpose();
    }
    out.block(t) = mass.llt().solve(rhs);
  }
  return out;
}

Eigen::MatrixXd reconstruct(const Space& space, const BrokenField& broken) {
  if (broken.degree != space.degree())
    throw InputError("reconstruction needs a broken field of the space's degree");
  if (broken.mesh->num_triangles() != space.mesh().num_triangles())
    throw InputError("broken field lives on a different mesh");
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(space.num_nodes(), broken.components);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(space.num_nodes());
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const auto nodes = space.element_nodes(t);
    const auto block = broken.block(t);
    for (std::size_t a = 0; a < nodes.size(); ++a) {
      sum.row(nodes[a]) += block.row(a);
      count[nodes[a]] += 1.0;
    }
  }
  for (int g = 0; g < space.num_nodes(); ++g) sum.row(g) /= count[g];
  return sum;
}

Field reconstruct_field(std::shared_ptr<const Space> space, const BrokenField& broken) {
  if (broken.components != 2) throw InputError("field reconstruction needs two components");
  const Eigen::MatrixXd values = reconstruct(*space, broken);
  Field u(space);
  for (int g = 0; g < space->num_nodes(); ++g) {
    u.coeffs[2 * g] = values(g, 0);
    u.coeffs[2 * g + 1] = values(g, 1);
  }
  return u;
}

double broken_inner(const BrokenField& f, const BrokenField& g) {
  if (f.degree != g.degree || f.components != g.components || f.mesh != g.mesh)
    throw InputError("broken fields have different layouts");
  const LagrangeBasis basis(f.degree);
  const Quadrature rule = cell_rule(2 * f.degree);
  std::vector<Eigen::VectorXd> phi;
  for (const auto& p : rule.points) phi.push_back(basis.values(p));
  double sum = 0.0;
  for (int t = 0; t < f.mesh->num_triangles(); ++t) {
    const double det = std::abs(f.mesh->signed_area(t)) * 2.0;
    const auto bf = f.block(t);
    const auto bg = g.block(t);
    for (int q = 0; q < rule.size(); ++q)
      sum += rule.weights[q] * det * (bf.transpose() * phi[q]).dot(bg.transpose() * phi[q]);
  }
  return sum;
}

}  // namespace tetherfem
