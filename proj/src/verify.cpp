#include "tetherfem/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "tetherfem/errors.hpp"

namespace tetherfem {

SmoothVectorField trig_field() {
  SmoothVectorField f;
  f.value = [](const Point& x) { return Vec2(std::sin(x.x()) * std::sin(x.y()), std::cos(x.x())); };
  f.gradient = [](const Point& x) {
    const double sx = std::sin(x.x()), cx = std::cos(x.x()), sy = std::sin(x.y()), cy = std::cos(x.y());
    Mat2 g;
    g << cx * sy, sx * cy, -sx, 0.0;
    return g;
  };
  f.hessian = [](const Point& x) {
    const double sx = std::sin(x.x()), cx = std::cos(x.x()), sy = std::sin(x.y()), cy = std::cos(x.y());
    Hess h;
    h[0] << -sx * sy, cx * cy, cx * cy, -sx * sy;
    h[1] << -cx, 0.0, 0.0, 0.0;
    return h;
  };
  return f;
}

SmoothVectorField cubic_field() {
  SmoothVectorField f;
  f.value = [](const Point& x) { return Vec2(x.x() * x.x() * x.x(), 0.0); };
  f.gradient = [](const Point& x) {
    Mat2 g = Mat2::Zero();
    g(0, 0) = 3.0 * x.x() * x.x();
    return g;
  };
  f.hessian = [](const Point& x) {
    Hess h{Mat2::Zero(), Mat2::Zero()};
    h[0](0, 0) = 6.0 * x.x();
    return h;
  };
  return f;
}

SmoothVectorField quadratic_field() {
  SmoothVectorField f;
  f.value = [](const Point& x) {
    return Vec2(0.5 * x.x() * x.x() - x.x() * x.y() + 0.3 * x.y(),
                0.25 * x.y() * x.y() + 2.0 * x.x() * x.y() - 0.1);
  };
  f.gradient = [](const Point& x) {
    Mat2 g;
    g << x.x() - x.y(), -x.x() + 0.3, 2.0 * x.y(), 0.5 * x.y() + 2.0 * x.x();
    return g;
  };
  f.hessian = [](const Point&) {
    Hess h;
    h[0] << 1.0, -1.0, -1.0, 0.0;
    h[1] << 0.0, 2.0, 2.0, 0.5;
    return h;
  };
  return f;
}

double fit_slope(const std::vector<double>& h, const std::vector<double>& errors) {
  if (h.size() != errors.size()) throw InputError("rate fit needs one error per mesh size");
  if (h.size() < 3) throw InputError("rate fit needs at least 3 levels");
  for (std::size_t i = 1; i < h.size(); ++i)
    if (!(h[i] < h[i - 1])) throw InputError("mesh sizes must be strictly decreasing");
  const std::size_t n = h.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(h[i] > 0.0) || !(errors[i] > 0.0)) throw InputError("rate fit needs positive sizes and errors");
    mx += std::log(h[i]);
    my += std::log(errors[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(h[i]) - mx;
    sxy += dx * (std::log(errors[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

RateReport make_report(std::vector<double> h, std::vector<double> errors, double target) {
  RateReport r;
  r.target = target;
  const bool positive = std::all_of(errors.begin(), errors.end(), [](double e) { return e > 0.0; });
  r.slope = positive ? fit_slope(h, errors) : std::numeric_limits<double>::quiet_NaN();
  if (!positive && h.size() < 3) throw InputError("rate fit needs at least 3 levels");
  r.pass = r.slope >= target - kRateMargin;
  r.h = std::move(h);
  r.errors = std::move(errors);
  return r;
}

std::vector<std::shared_ptr<const Mesh>> unit_square_levels(int levels) {
  if (levels < 1 || levels > 10) throw InputError("level count must be in [1, 10]");
  std::vector<std::shared_ptr<const Mesh>> out;
  for (int l = 0; l < levels; ++l) {
    const int n = 2 << l;
    out.push_back(std::make_shared<Mesh>(structured_rectangle(n, n, {0.0, 0.0}, {1.0, 1.0})));
  }
  return out;
}

namespace {

double mesh_size(const Mesh& mesh) { return shape_metrics(mesh).max_h; }

void check_levels(int levels) {
  if (levels < 3) throw InputError("rate studies need at least 3 levels");
}

EnergyParams jump_only() {
  EnergyParams p;
  p.material.penalty = PenaltyKind::None;
  p.material.strain_energy = false;
  return p;
}

}  // namespace

InterpErrors interpolation_errors(std::shared_ptr<const Space> space, const SmoothVectorField& u, int quad_degree) {
  const Field uh = interpolate(space, u.value);
  const Quadrature rule = cell_rule(quad_degree);
  const LagrangeBasis& basis = space->basis();
  std::vector<Eigen::VectorXd> vals;
  std::vector<Eigen::MatrixXd> grads, hess;
  for (const auto& p : rule.points) {
    vals.push_back(basis.values(p));
    grads.push_back(basis.gradients(p));
    hess.push_back(basis.hessians(p));
  }
  double l2 = 0.0, h1 = 0.0, h2 = 0.0;
  for (int t = 0; t < space->mesh().num_triangles(); ++t) {
    const ElementMap& map = space->map(t);
    const Eigen::MatrixXd U = uh.local(t);
    const double det = std::abs(map.det);
    for (int k = 0; k < rule.size(); ++k) {
      const Point x = map.to_physical(rule.points[k]);
      const double w = rule.weights[k] * det;
      const Vec2 v = U.transpose() * vals[k];
      const Mat2 g = U.transpose() * map.physical_gradients(grads[k]);
      const Eigen::MatrixXd H = U.transpose() * map.physical_hessians(hess[k]);  // 2 x 3
      l2 += w * (v - u.value(x)).squaredNorm();
      h1 += w * (g - u.gradient(x)).squaredNorm();
      const Hess he = u.hessian(x);
      for (int i = 0; i < 2; ++i) {
        const double dxx = H(i, 0) - he[i](0, 0);
        const double dxy = H(i, 1) - he[i](0, 1);
        const double dyy = H(i, 2) - he[i](1, 1);
        h2 += w * (dxx * dxx + 2.0 * dxy * dxy + dyy * dyy);
      }
    }
  }
  return {std::sqrt(l2), std::sqrt(h1), std::sqrt(h2)};
}

InterpStudy interp_rate_study(const SmoothVectorField& u, int levels, int degree) {
  check_levels(levels);
  std::vector<double> h, l2, h1, h2;
  for (const auto& mesh : unit_square_levels(levels)) {
    const InterpErrors e = interpolation_errors(std::make_shared<Space>(mesh, degree), u);
    h.push_back(mesh_size(*mesh));
    l2.push_back(e.l2);
    h1.push_back(e.h1);
    h2.push_back(e.broken_h2);
  }
  const double s = degree + 1;
  return {make_report(h, l2, s), make_report(h, h1, s - 1.0), make_report(h, h2, s - 2.0)};
}

JumpStudy jump_decay_study(const SmoothVectorField& u, int levels, int degree) {
  check_levels(levels);
  std::vector<double> h, jump, cons;
  for (const auto& mesh : unit_square_levels(levels)) {
    auto space = std::make_shared<Space>(mesh, degree);
    const Field uh = interpolate(space, u.value);
    const EnergyAssembler assembler(space, jump_only());
    h.push_back(mesh_size(*mesh));
    jump.push_back(assembler.jump_seminorm_squared(uh.coeffs));
    cons.push_back(std::abs(assembler.energy(uh.coeffs, kTermConsistency).consistency_term));
  }
  // With s = q + 1 the jump sum decays like h^(2s - 4) and the consistency term like h^(s - 2).
  const double s = degree + 1;
  return {make_report(h, jump, 2.0 * s - 4.0), make_report(h, cons, s - 2.0)};
}

double trace_constant_probe(const Space& space) {
  const LagrangeBasis& basis = space.basis();
  const int q = basis.degree();
  const int n = basis.size();
  const Quadrature cell = cell_rule(2 * q);
  const Quadrature edge = edge_rule(2 * q);
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < cell.size(); ++k) {
    const Eigen::VectorXd phi = basis.values(cell.points[k]);
    mass += cell.weights[k] * phi * phi.transpose();
  }
  const std::array<Point, 3> corners{Point(0.0, 0.0), Point(1.0, 0.0), Point(0.0, 1.0)};
  std::array<double, 3> lambda{};
  for (int j = 0; j < 3; ++j) {
    const auto [a, b] = local_edge_vertices(j);
    Eigen::MatrixXd trace = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < edge.size(); ++k) {
      const Point xi = corners[a] + edge.points[k].x() * (corners[b] - corners[a]);
      const Eigen::VectorXd phi = basis.values(xi);
      trace += edge.weights[k] * phi * phi.transpose();
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(trace, mass, Eigen::EigenvaluesOnly);
    lambda[j] = solver.eigenvalues().maxCoeff();
  }
  // Physical ratio = (h_e |e| / |det B|) * reference ratio, with h_e = |e|.
  const Mesh& mesh = space.mesh();
  double best = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double det = std::abs(space.map(t).det);
    for (int j = 0; j < 3; ++j) {
      const auto [a, b] = local_edge_vertices(j);
      const double len = (mesh.vertices[mesh.triangles[t][a]] - mesh.vertices[mesh.triangles[t][b]]).norm();
      best = std::max(best, len * len / det * lambda[j]);
    }
  }
  return best;
}

double poincare_ratio(const Field& w, int r) {
  if (r != 2 && r != 4) throw InputError("Poincare probe supports r = 2 or r = 4");
  const Space& space = *w.space;
  const Quadrature rule = cell_rule(std::min(20, 2 * r * space.degree()));
  std::vector<Eigen::MatrixXd> grads;
  for (const auto& p : rule.points) grads.push_back(space.basis().gradients(p));
  double lhs = 0.0, area = 0.0;
  Mat2 mean = Mat2::Zero();
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const ElementMap& map = space.map(t);
    const Eigen::MatrixXd U = w.local(t);
    for (int k = 0; k < rule.size(); ++k) {
      const double wq = rule.weights[k] * std::abs(map.det);
      const Mat2 g = U.transpose() * map.physical_gradients(grads[k]);
      lhs += wq * std::pow(g.squaredNorm(), 0.5 * r);
      mean += wq * g;
      area += wq;
    }
  }
  mean /= area;
  lhs = std::pow(lhs, 2.0 / r);
  const double seminorm = broken_h2_seminorm(w);
  const double rhs = seminorm * seminorm + std::pow(area, 2.0 / r) * mean.squaredNorm();
  return rhs > 0.0 ? lhs / rhs : 0.0;
}

double poincare_probe(std::shared_ptr<const Space> space, int r, int samples, std::uint64_t seed) {
  if (samples < 1) throw InputError("Poincare probe needs at least one sample");
  const Mesh& mesh = space->mesh();
  Point lo = mesh.vertices.front(), hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double size = (hi - lo).maxCoeff();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  constexpr int kModes = 6;
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    // A random low-frequency trigonometric field plus a random affine part; frequencies scale
    // with the domain so the sample family is the same at every resolution.
    std::array<std::array<double, 4>, 2 * kModes> modes;
    for (auto& m : modes) {
      m[0] = 3.0 * unit(rng) / size;
      m[1] = 3.0 * unit(rng) / size;
      m[2] = std::numbers::pi * unit(rng);
      m[3] = unit(rng);
    }
    Mat2 affine;
    affine << unit(rng), unit(rng), unit(rng), unit(rng);
    const Field w = interpolate(space, [&](const Point& x) {
      Vec2 v = affine * x;
      for (int c = 0; c < 2; ++c)
        for (int k = 0; k < kModes; ++k) {
          const auto& m = modes[c * kModes + k];
          v[c] += m[3] * size * std::sin(m[0] * x.x() + m[1] * x.y() + m[2]);
        }
      return v;
    });
    best = std::max(best, poincare_ratio(w, r));
  }
  return best;
}

double natural_bc_residual(const Field& u) {
  const Space& space = *u.space;
  const Quadrature edge = edge_rule(2 * space.degree());
  const std::array<Point, 3> corners{Point(0.0, 0.0), Point(1.0, 0.0), Point(0.0, 1.0)};
  double sum = 0.0;
  for (const auto& be : space.edges().boundary) {
    const ElementMap& map = space.map(be.element);
    const Eigen::MatrixXd U = u.local(be.element);
    const auto [a, b] = local_edge_vertices(be.local);
    const Vec2& n = be.normal;
    for (int k = 0; k < edge.size(); ++k) {
      const Point xi = corners[a] + edge.points[k].x() * (corners[b] - corners[a]);
      const Eigen::MatrixXd H = U.transpose() * map.physical_hessians(space.basis().hessians(xi));
      for (int i = 0; i < 2; ++i)
        sum += edge.weights[k] * be.length *
               std::abs(H(i, 0) * n.x() * n.x() + 2.0 * H(i, 1) * n.x() * n.y() + H(i, 2) * n.y() * n.y());
    }
  }
  return sum;
}

std::optional<double> jacobian_at(const Field& u, const Point& x) {
  const int t = locate(*u.space, x);
  if (t < 0) return std::nullopt;
  // Clamp round-off just outside the closed triangle back onto it.
  const ElementMap& map = u.space->map(t);
  Point xi = map.to_reference(x).cwiseMax(0.0);
  if (xi.sum() > 1.0) xi /= xi.sum();
  const Point p = map.to_physical(xi);
  const Mat2 g = eval_grad(u, t, std::span<const Point>(&p, 1)).front();
  return (Mat2::Identity() + g).determinant();
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace

TetherProbe tether_probe(const Field& u, const Circle& a, const Circle& b, double far_radius, int samples) {
  if (samples < 2) throw InputError("tether probe needs at least two samples");
  const Vec2 axis = (b.center - a.center).normalized();
  const Point p0 = a.center + 1.5 * a.radius * axis;
  const Point p1 = b.center - 1.5 * b.radius * axis;
  if ((p1 - p0).dot(axis) <= 0.0) throw InputError("cells too close for a tether probe");

  std::vector<double> bridge, far;
  for (int i = 0; i < samples; ++i) {
    const double s = static_cast<double>(i) / (samples - 1);
    if (auto j = jacobian_at(u, p0 + s * (p1 - p0))) bridge.push_back(*j);
    const double theta = 2.0 * std::numbers::pi * i / samples;
    if (auto j = jacobian_at(u, far_radius * Point(std::cos(theta), std::sin(theta)))) far.push_back(*j);
  }
  TetherProbe r;
  r.bridge_samples = static_cast<int>(bridge.size());
  r.far_samples = static_cast<int>(far.size());
  r.bridge_median = median(bridge);
  r.far_median = median(far);
  r.ratio = r.bridge_median / r.far_median;
  return r;
}

}  // namespace tetherfem
