// Acceptance run: one PASS/FAIL line per criterion T1..T10.
// Usage: tetherfem_acceptance [T1 T2 ...]   (no arguments runs all of them)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "tetherfem/cli_io.hpp"

using namespace tetherfem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int worker_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(n, 1u, 8u));
}

Eigen::VectorXd random_coeffs(Eigen::Index n, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

// Smooth random state: uniform contraction (J near 0.36, where the penalty is active) plus a
// low-frequency trig mode and small nodal noise.
Eigen::VectorXd random_state(const std::shared_ptr<const Space>& space, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double a1 = 0.1 * normal(rng), a2 = 0.1 * normal(rng), p1 = phase(rng), p2 = phase(rng);
  const double k1 = 1.0 + 0.3 * normal(rng), k2 = 1.0 + 0.3 * normal(rng);
  Eigen::VectorXd u = interpolate(space, [&](const Point& x) {
                        return Vec2(-0.4 * x.x() + a1 * std::sin(k1 * x.x() + k2 * x.y() + p1),
                                    -0.4 * x.y() + a2 * std::cos(k2 * x.x() - k1 * x.y() + p2));
                      }).coeffs;
  return u + random_coeffs(u.size(), 2e-3, rng);
}

// Structured square, an unstructured one-cell disk and its refinement.
std::vector<std::shared_ptr<const Space>> three_spaces() {
  DomainSpec disk;
  disk.outer_radius = 3.0;
  disk.cells = {Circle{{0.0, 0.0}, 1.0}};
  disk.h = 0.5;
  auto coarse = std::make_shared<const Mesh>(generate_mesh(disk));
  auto fine = std::make_shared<const Mesh>(refine_uniform(*coarse));
  auto square = std::make_shared<const Mesh>(structured_rectangle(4, 4, {0.0, 0.0}, {1.0, 1.0}));
  return {std::make_shared<const Space>(square, 2), std::make_shared<const Space>(coarse, 2),
          std::make_shared<const Space>(fine, 2)};
}

Outcome t1() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (const auto& space : three_spaces())
    for (int i = 0; i < 50; ++i) {
      const Field u(space, random_coeffs(space->num_dofs(), 1.0, rng));
      const double a = psi_ho_edge_form(u, 10.0);
      const double b = psi_ho_discrete_gradient_form(u, 10.0);
      worst = std::max(worst, std::abs(a - b) / std::abs(a));
    }
  return {worst <= 1e-10, fmt("worst relative gap %.3g (limit 1e-10)", worst)};
}

Outcome t2() {
  std::mt19937_64 rng(12);
  double worst_edge = 0.0;
  double worst_ratio = 0.0, cr_value = 0.0;
  for (const auto& space : three_spaces()) {
    const EnergyAssembler assembler(space, EnergyParams{});
    const int n_edges = static_cast<int>(space->edges().interior.size());
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd u = random_coeffs(space->num_dofs(), 1.0, rng);
      BrokenField w(space->mesh_ptr(), space->degree() - 2, 8);
      w.coeffs = Eigen::MatrixXd::NullaryExpr(w.coeffs.rows(), w.coeffs.cols(), [&] {
        return std::normal_distribution<double>(0.0, 1.0)(rng);
      });
      const int e = std::uniform_int_distribution<int>(0, n_edges - 1)(rng);
      const double lhs = broken_inner(assembler.lift_edge(u, e), w);
      const double rhs = assembler.edge_pairing(u, w, e);
      worst_edge = std::max(worst_edge, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
    }
  }
  // Lifting bound with the measured constant on the unstructured mesh.
  const auto space = three_spaces()[1];
  const EnergyAssembler assembler(space, EnergyParams{});
  cr_value = estimate_CR(space).value;
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd u = random_coeffs(space->num_dofs(), 1.0, rng);
    const BrokenField r = assembler.lifting(u);
    worst_ratio = std::max(worst_ratio, broken_inner(r, r) / assembler.jump_seminorm_squared(u));
  }
  const bool pass = worst_edge <= 1e-11 && worst_ratio <= cr_value * (1.0 + 1e-9);
  return {pass, fmt("per-edge adjoint gap %.3g (limit 1e-11); max lift ratio %.6g <= C_R %.6g", worst_edge,
                    worst_ratio, cr_value)};
}

Outcome t3() {
  std::mt19937_64 rng(13);
  double worst = 0.0, min_phi_share = 1.0;
  for (const auto& space : three_spaces()) {
    EnergyParams params;
    params.epsilon = 5e-3;
    const EnergyAssembler assembler(space, params);
    const Eigen::VectorXd u = random_state(space, rng);
    Eigen::VectorXd g;
    const EnergyBreakdown b = assembler.energy_and_gradient(u, g);
    min_phi_share = std::min(min_phi_share, b.bulk_Phi / b.total);
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd d = random_coeffs(space->num_dofs(), 1.0, rng);
      // Fourth-order central stencil: the a = 60 penalty has a large third derivative along rough
      // nodal directions, which the two-point stencil resolves only to about 1e-5.
      const double h = 1e-5;
      const auto f = [&](double t) { return assembler.energy(u + t * d).total; };
      const double fd = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
      const double exact = g.dot(d);
      worst = std::max(worst, std::abs(fd - exact) / std::abs(exact));
    }
  }
  return {worst < 1e-6, fmt("worst relative FD error %.3g over 60 directions (limit 1e-6); penalty share of energy "
                            ">= %.2g",
                            worst, min_phi_share)};
}

Outcome t4() {
  std::mt19937_64 rng(14);
  const auto space = three_spaces()[2];
  const double cr = estimate_CR(space).value;
  double worst = std::numeric_limits<double>::infinity();
  // Half nodal noise, half smooth states whose small jumps leave the consistency term exposed.
  for (int i = 0; i < 500; ++i) {
    const Eigen::VectorXd u = i % 2 ? random_state(space, rng) : random_coeffs(space->num_dofs(), 1.0, rng);
    worst = std::min(worst, psi_ho_edge_form(Field(space, u), 2.0 * cr));
  }
  return {worst >= -1e-12, fmt("min higher-order energy %.3g at alpha = 2 C_R = %.4g (limit -1e-12)", worst, 2.0 * cr)};
}

Outcome t5() {
  const InterpStudy s = interp_rate_study(trig_field(), 4);
  const JumpStudy j = jump_decay_study(trig_field(), 4);
  const bool pass = s.l2.slope >= 2.75 && s.h1.slope >= 1.75 && s.broken_h2.slope >= 0.75 && j.jump.slope >= 1.7;
  return {pass, fmt("slopes L2 %.3f, H1 %.3f, broken H2 %.3f, jump %.3f (limits 2.75, 1.75, 0.75, 1.7)", s.l2.slope,
                    s.h1.slope, s.broken_h2.slope, j.jump.slope)};
}

struct DiskRun {
  std::shared_ptr<const Space> space;
  std::vector<SolveResult> stages;
};

DiskRun solve_disk(double radius, std::vector<Circle> cells, double h, double epsilon, std::vector<double> schedule) {
  DomainSpec spec;
  spec.outer_radius = radius;
  spec.cells = cells;
  spec.h = h;
  auto mesh = std::make_shared<const Mesh>(generate_mesh(spec));
  auto space = std::make_shared<const Space>(mesh, 2);
  EnergyParams params;
  params.epsilon = epsilon;
  params.threads = worker_threads();
  const EnergyAssembler assembler(space, params);
  return {space, continuation_solve(assembler, cells, schedule, RunConfig::default_solver())};
}

bool monotone(const SolveResult& r) {
  return std::all_of(r.line_searches.begin(), r.line_searches.end(),
                     [](const LineSearchRecord& l) { return l.f <= l.f0 + 1e-12 * (1.0 + std::abs(l.f0)); });
}

// Runs with energy histories, collected for the monotonicity part of T9.
std::vector<const SolveResult*> logged_runs;

// Frozen after the first converged run: bridge/far-field median J is about 0.34 at delta 0.6 and
// about 0.98 at delta 0.2. The criterion's 0.7 threshold separates them with room on both sides.
constexpr double kTetherRatio = 0.7;

Outcome t6() {
  static DiskRun run;
  const Circle a{{-2.5, 0.0}, 1.0}, b{{2.5, 0.0}, 1.0};
  run = solve_disk(11.0, {a, b}, 0.33, 5e-3, {0.2, 0.4, 0.6});
  for (const auto& s : run.stages) logged_runs.push_back(&s);
  bool converged = true;
  for (const auto& s : run.stages) converged = converged && s.converged;
  const TetherProbe low = tether_probe(Field(run.space, run.stages.front().x), a, b, 5.0);
  const TetherProbe high = tether_probe(Field(run.space, run.stages.back().x), a, b, 5.0);
  const bool pass = converged && high.ratio <= kTetherRatio && low.ratio > kTetherRatio;
  return {pass, fmt("%d triangles, converged %s; J ratio bridge/far %.3f at delta 0.6 (<= %.2f), %.3f at delta 0.2 "
                    "(> %.2f)",
                    run.space->mesh().num_triangles(), converged ? "yes" : "no", high.ratio, kTetherRatio,
                    low.ratio, kTetherRatio)};
}

Outcome t7() {
  double worst_avg = 0.0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const double l1 = 0.2 + 2.3 * i / 9.0, l2 = 0.2 + 2.3 * j / 9.0;
      const double w = strain_energy(DefGrad{Eigen::Vector2d(l1, l2).asDiagonal().toDenseMatrix()});
      worst_avg = std::max(worst_avg, std::abs(angular_average_energy(l1, l2, 1024) - w));
    }
  const CoercivityScan scan = coercivity_scan(101);
  const double equality = coercivity_margin(DefGrad{std::numbers::sqrt2 * Eigen::Matrix2d::Identity()});
  const double literal = literal_coercivity_margin(DefGrad{Eigen::Matrix2d::Identity()});
  const bool pass = worst_avg <= 1e-9 && scan.worst_margin >= -1e-12 && std::abs(equality) <= 1e-12 && literal < 0.0;
  return {pass, fmt("angular average gap %.3g (limit 1e-9); corrected bound margin %.3g, %.3g at sqrt2 I; literal "
                    "bound at I %.4f (expected < 0)",
                    worst_avg, scan.worst_margin, equality, literal)};
}

Outcome t8() {
  const auto u = [](const Point& x) {
    return Vec2(0.3 * std::sin(3.0 * x.x()) * std::sin(2.0 * x.y()), 0.3 * std::cos(2.0 * x.x() + x.y()));
  };
  std::vector<double> phi;
  for (const auto& mesh : unit_square_levels(5)) {
    auto space = std::make_shared<const Space>(mesh, 2);
    const EnergyAssembler assembler(space, EnergyParams{});
    phi.push_back(assembler.energy(interpolate(space, u).coeffs, kTermPhi).bulk_Phi);
  }
  std::vector<double> gaps;
  for (std::size_t l = 0; l + 1 < phi.size(); ++l) gaps.push_back(std::abs(phi[l] - phi.back()));
  bool pass = true;
  for (std::size_t l = 1; l < gaps.size(); ++l) pass = pass && gaps[l] < gaps[l - 1];
  return {pass, fmt("|int Phi(grad u_h) - int Phi(grad u_ref)| = %.3g, %.3g, %.3g, %.3g (must decrease)", gaps[0],
                    gaps[1], gaps[2], gaps[3])};
}

Outcome t9() {
  std::mt19937_64 rng(19);
  // Quadratic with spectrum in [1, 10].
  const int n = 50;
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::NullaryExpr(n, n, [&] {
                              return std::normal_distribution<double>(0.0, 1.0)(rng);
                            })).householderQ();
  const Eigen::VectorXd lambda = Eigen::VectorXd::LinSpaced(n, 1.0, 10.0);
  const Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
  const Eigen::VectorXd rhs = random_coeffs(n, 1.0, rng);
  const Objective quad = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = a * x - rhs;
    return 0.5 * x.dot(a * x) - rhs.dot(x);
  };
  SolveConfig cfg;
  const SolveResult small = minimize(quad, Eigen::VectorXd::Zero(n), std::vector<char>(n, 0), cfg);
  const bool cg_ok = small.converged && small.iterations <= n + 10;

  // Ill-conditioned diagonal quadratic starting above 1e6, long enough to exercise the stride.
  const int m = 400;
  const Eigen::VectorXd diag = Eigen::VectorXd::LinSpaced(m, -2.0, 4.0).unaryExpr([](double e) {
    return std::pow(10.0, e);
  });
  const Objective stiff = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = diag.cwiseProduct(x);
    return 0.5 * x.dot(g);
  };
  const SolveResult big = minimize(stiff, Eigen::VectorXd::Constant(m, 30.0), std::vector<char>(m, 0), cfg);
  bool format_ok = big.history.front().iteration == 0 && big.history.back().iteration == big.iterations &&
                   big.history.front().flagged && !big.history.back().flagged;
  for (std::size_t i = 0; i < big.history.size(); ++i) {
    const HistoryEntry& h = big.history[i];
    format_ok = format_ok && h.flagged == (h.energy > 1e6);
    if (i > 0 && i + 1 < big.history.size()) format_ok = format_ok && h.iteration == 100 * static_cast<int>(i);
  }
  std::ostringstream csv;
  write_history_csv(big.history, csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  format_ok = format_ok && line == "iteration,energy,flagged";
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  format_ok = format_ok && rows == big.history.size();

  bool mono = monotone(small) && monotone(big);
  for (const SolveResult* r : logged_runs) mono = mono && monotone(*r);
  const bool pass = cg_ok && format_ok && mono;
  return {pass, fmt("CG on n = %d quadratic: %d iterations (limit %d); history stride/flags/CSV %s over %d iterations; "
                    "monotone on %zu runs %s",
                    n, small.iterations, n + 10, format_ok ? "ok" : "BAD", big.iterations, logged_runs.size() + 2,
                    mono ? "ok" : "BAD")};
}

// Samples J on the circle of radius r about c.
std::vector<double> circle_J(const Field& u, const Point& c, double r, int samples = 720) {
  std::vector<double> out(samples, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < samples; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / samples;
    if (const auto j = jacobian_at(u, c + r * Point(std::cos(theta), std::sin(theta)))) out[i] = *j;
  }
  return out;
}

// Number of maximal arcs of the circle where J < threshold.
int low_j_arcs(const std::vector<double>& J, double threshold) {
  const int n = static_cast<int>(J.size());
  std::vector<char> low(n);
  for (int i = 0; i < n; ++i) low[i] = J[i] < threshold;
  if (std::all_of(low.begin(), low.end(), [](char v) { return v; })) return 1;
  int arcs = 0;
  for (int i = 0; i < n; ++i) arcs += low[i] && !low[(i + n - 1) % n];
  return arcs;
}

double min_of(const std::vector<double>& v) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : v)
    if (x < m) m = x;
  return m;
}

Outcome t10() {
  static DiskRun coarse_eps, fine_eps;
  const Circle cell{{0.0, 0.0}, 1.0};
  coarse_eps = solve_disk(7.5, {cell}, 0.33, 5e-2, {0.25, 0.5});
  fine_eps = solve_disk(7.5, {cell}, 0.33, 5e-3, {0.25, 0.5});
  bool converged = true;
  for (const auto* run : {&coarse_eps, &fine_eps})
    for (const auto& s : run->stages) {
      converged = converged && s.converged;
      logged_runs.push_back(&s);
    }
  const Field uc(coarse_eps.space, coarse_eps.stages.back().x);
  const Field uf(fine_eps.space, fine_eps.stages.back().x);
  const auto jc = circle_J(uc, cell.center, 1.5), jf = circle_J(uf, cell.center, 1.5);
  const int arcs_coarse = low_j_arcs(jc, 0.5);
  const int arcs_fine = low_j_arcs(jf, 0.5);
  const bool pass = converged && arcs_fine >= arcs_coarse;
  std::string detail = fmt(
      "converged %s; arcs with J < 0.5 at r = 1.5: %d at eps 5e-3, %d at eps 5e-2 (need fine >= coarse); "
      "min J at r = 1.5: %.3f / %.3f, at r = 1.1: %.3f / %.3f",
      converged ? "yes" : "no", arcs_fine, arcs_coarse, min_of(jf), min_of(jc),
      min_of(circle_J(uf, cell.center, 1.1)), min_of(circle_J(uc, cell.center, 1.1)));
  if (arcs_fine == 0 && arcs_coarse == 0) detail += "; no low-J arcs at either eps, holds only as 0 >= 0";
  return {pass, detail};
}

struct Criterion {
  std::string id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  // T9 comes last so its monotonicity check covers the T6 and T10 runs.
  const std::vector<Criterion> criteria = {
      {"T1", "energy-form identity", 30, t1},    {"T2", "lifting adjoint and bound", 30, t2},
      {"T3", "gradient exactness", 60, t3},      {"T4", "stability at alpha = 2 C_R", 60, t4},
      {"T5", "interpolation and jump rates", 300, t5}, {"T6", "tether formation", 1800, t6},
      {"T7", "material law", 10, t7},            {"T8", "penalty continuity", 120, t8},
      {"T10", "epsilon as length scale", 1800, t10},   {"T9", "solver hygiene", 10, t9},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS " : "FAIL ") << c.id << " " << c.title << ": " << o.detail
              << fmt(" [%.1f s of %.0f s%s]", seconds, c.budget_seconds, in_time ? "" : ", over budget") << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
