#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "tetherfem/energy.hpp"

namespace tetherfem {

/// Analytic vector field with first and second derivatives; used as u_exact in rate studies.
struct SmoothVectorField {
  std::function<Vec2(const Point&)> value;
  std::function<Mat2(const Point&)> gradient;  // (i, j) = d u_i / d x_j
  std::function<Hess(const Point&)> hessian;
};

/// (sin x sin y, cos x).
SmoothVectorField trig_field();
/// (x^3, 0).
SmoothVectorField cubic_field();
/// An arbitrary quadratic, reproduced exactly by q = 2.
SmoothVectorField quadratic_field();

struct RateReport {
  std::vector<double> h;
  std::vector<double> errors;
  double slope = 0.0;
  double target = 0.0;
  bool pass = false;  // slope >= target - 0.25
};

inline constexpr double kRateMargin = 0.25;

/// Least-squares slope of log(e) against log(h). Needs >= 3 levels with h strictly decreasing.
double fit_slope(const std::vector<double>& h, const std::vector<double>& errors);
RateReport make_report(std::vector<double> h, std::vector<double> errors, double target);

/// Unit-square meshes for rate studies: level l has 2^(l+1) squares per side, split diagonally.
std::vector<std::shared_ptr<const Mesh>> unit_square_levels(int levels);

struct InterpErrors {
  double l2 = 0.0;
  double h1 = 0.0;
  double broken_h2 = 0.0;
};

/// Errors of the degree-q nodal interpolant, measured with a degree-`quad_degree` cell rule.
InterpErrors interpolation_errors(std::shared_ptr<const Space> space, const SmoothVectorField& u,
                                  int quad_degree = 10);

struct InterpStudy {
  RateReport l2, h1, broken_h2;
};

/// Targets s - m for s = q + 1: L^2 -> 3, H^1 -> 2, broken H^2 -> 1 for q = 2.
InterpStudy interp_rate_study(const SmoothVectorField& u, int levels, int degree = 2);

struct JumpStudy {
  RateReport jump;         // sum_e h_e^{-1} int_e |[grad I_h u]|^2, target 2
  RateReport consistency;  // |sum_e int_e {grad grad I_h u} . [grad I_h u (x) n]|, target 1
};

JumpStudy jump_decay_study(const SmoothVectorField& u, int levels, int degree = 2);

/// max over triangles K and their edges e of h_e ||v||^2_{L^2(e)} / ||v||^2_{L^2(K)} over v in P_q(K).
double trace_constant_probe(const Space& space);

/// Largest sampled ratio ||grad w||^2_{L^r} / (|w|^2_{H^2(Omega, T_h)} + |Omega|^{2/r} |mean grad w|^2)
/// over `samples` random smooth fields interpolated into the space. r must be 2 or 4.
double poincare_probe(std::shared_ptr<const Space> space, int r, int samples = 100, std::uint64_t seed = 1);
/// The same ratio for a single field.
double poincare_ratio(const Field& w, int r);

/// det(1 + grad u) at a physical point; nullopt outside the mesh.
std::optional<double> jacobian_at(const Field& u, const Point& x);

struct TetherProbe {
  double bridge_median = 0.0;  // median J on the segment between two cells, r/2 clear of each
  double far_median = 0.0;     // median J on a circle about the origin
  double ratio = 0.0;          // bridge_median / far_median
  int bridge_samples = 0;
  int far_samples = 0;
};

/// Densification proxy between cells a and b: a ratio well below 1 means a compacted band.
TetherProbe tether_probe(const Field& u, const Circle& a, const Circle& b, double far_radius, int samples = 101);

/// Boundary integral of sum_k |Hess(u_k) : n (x) n| from the piecewise Hessians.
double natural_bc_residual(const Field& u);

}  // namespace tetherfem
