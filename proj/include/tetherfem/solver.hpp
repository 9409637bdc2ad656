#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tetherfem/energy.hpp"

namespace tetherfem {

/// Contraction fraction per cell: the deformed cell radius is (1 - delta) r_c. The outer
/// boundary is fixed.
struct BoundaryData {
  std::vector<double> contraction;

  static BoundaryData uniform(std::size_t cells, double delta) { return {std::vector<double>(cells, delta)}; }
};

struct DirichletSetup {
  std::vector<char> fixed;  // per DOF
  Eigen::VectorXd values;   // prescribed values on fixed DOFs, zero elsewhere
  Eigen::VectorXd initial;  // values on fixed DOFs, zero on free DOFs
};

/// Fixes every boundary DOF to the nodal interpolant of the radial contraction g(x) = -delta (x - c)
/// on cell boundaries and g = 0 on the outer boundary. Throws InputError on untagged boundary nodes.
DirichletSetup apply_dirichlet(const Space& space, const std::vector<Circle>& cells, const BoundaryData& data);

struct SolveConfig {
  int max_iters = 20000;
  double grad_tol_rel = 1e-6;   // relative to the initial free-DOF sup-norm gradient
  double grad_tol_abs = 1e-12;  // floor on the tolerance
  double c1 = 1e-4;
  double c2 = 0.4;
  int max_probes = 25;
  int restart_period = 200;
  double max_step = 0.0;        // cap on the sup-norm of an accepted step (0 = no cap)
  std::vector<double> schedule; // contraction fractions applied incrementally
  int log_stride = 100;
  std::uint64_t seed = 0;       // start vector of the C_R power iteration when alpha is automatic

  void validate() const;
  bool operator==(const SolveConfig&) const = default;
};

/// Energies above this are flagged in the history.
inline constexpr double kHistoryFlagThreshold = 1e6;

struct HistoryEntry {
  int iteration = 0;
  double energy = 0.0;
  bool flagged = false;
};

struct LineSearchRecord {
  double f0 = 0.0;
  double slope0 = 0.0;  // directional derivative at step 0
  double step = 0.0;
  double f = 0.0;
  double slope = 0.0;   // directional derivative at the accepted step
  bool fallback = false;
};

struct SolveResult {
  Eigen::VectorXd x;
  std::vector<HistoryEntry> history;
  std::vector<LineSearchRecord> line_searches;
  bool converged = false;
  int iterations = 0;
  double energy = 0.0;
  double grad_norm = 0.0;  // sup-norm on free DOFs
  double grad_tol = 0.0;
  std::string message;
  EnergyBreakdown breakdown;
  double seconds = 0.0;  // wall time of the solve
};

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Polak-Ribiere+ nonlinear conjugate gradients with a strong-Wolfe line search over the free
/// DOFs; fixed DOFs keep their initial values bitwise.
SolveResult minimize(const Objective& objective, Eigen::VectorXd x0, const std::vector<char>& fixed,
                     const SolveConfig& config);
/// Energy form. The relative tolerance is measured against the initial gradient without the
/// penalty term, whose exponential size at a rough start carries no scale information.
SolveResult minimize(const EnergyAssembler& energy, const Eigen::VectorXd& u0, const std::vector<char>& fixed,
                     const SolveConfig& config);

/// Solves one stage per contraction fraction, warm-starting each from the previous minimizer
/// rescaled to the new boundary data. All stages share the tolerance set at the first cold start.
std::vector<SolveResult> continuation_solve(const EnergyAssembler& energy, const std::vector<Circle>& cells,
                                            const std::vector<double>& schedule, const SolveConfig& config);

/// `iteration,energy,flagged` rows with a header line.
void write_history_csv(const std::vector<HistoryEntry>& history, std::ostream& out);

}  // namespace tetherfem
