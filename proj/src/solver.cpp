#include "tetherfem/solver.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "tetherfem/errors.hpp"

namespace tetherfem {

DirichletSetup apply_dirichlet(const Space& space, const std::vector<Circle>& cells, const BoundaryData& data) {
  if (data.contraction.size() != cells.size())
    throw InputError("boundary data needs one contraction fraction per cell");
  for (double d : data.contraction)
    if (!(d >= 0.0 && d < 1.0)) throw InputError("contraction fraction must lie in [0, 1)");
  DirichletSetup s;
  s.fixed.assign(space.num_dofs(), 0);
  s.values = Eigen::VectorXd::Zero(space.num_dofs());
  for (int g : space.boundary_nodes()) {
    const int tag = space.node_tag(g);
    if (tag == kInteriorTag) throw InputError("boundary node " + std::to_string(g) + " carries no boundary tag");
    Vec2 value = Vec2::Zero();
    if (is_cell_tag(tag)) {
      const int c = cell_of_tag(tag);
      if (c >= static_cast<int>(cells.size())) throw InputError("boundary tag refers to an unknown cell");
      value = -data.contraction[c] * (space.node(g) - cells[c].center);
    }
    s.fixed[2 * g] = s.fixed[2 * g + 1] = 1;
    s.values[2 * g] = value.x();
    s.values[2 * g + 1] = value.y();
  }
  s.initial = s.values;
  return s;
}

void SolveConfig::validate() const {
  if (max_iters < 0) throw InputError("max_iters must be non-negative");
  if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw InputError("line search needs 0 < c1 < c2 < 1");
  if (max_probes < 1) throw InputError("max_probes must be positive");
  if (restart_period < 1) throw InputError("restart period must be positive");
  if (log_stride < 1) throw InputError("log stride must be positive");
  if (!(grad_tol_rel >= 0.0) || !(grad_tol_abs >= 0.0)) throw InputError("gradient tolerances must be non-negative");
  if (!(max_step >= 0.0)) throw InputError("max_step must be non-negative");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] >= 0.0 && schedule[i] < 1.0)) throw InputError("schedule entries must lie in [0, 1)");
    if (i > 0 && schedule[i] < schedule[i - 1]) throw InputError("contraction schedule must be monotone");
  }
}

namespace {

double free_sup_norm(const Eigen::VectorXd& g, const std::vector<char>& fixed) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (!fixed[i]) m = std::max(m, std::abs(g[i]));
  return m;
}

void zero_fixed(Eigen::VectorXd& g, const std::vector<char>& fixed) {
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (fixed[i]) g[i] = 0.0;
}

// Minimizer of the cubic matching values and slopes at a and b, or NaN when it does not exist.
double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return b - (b - a) * (db + d2 - d1) / denom;
}

// Relative size below which energy differences are treated as round-off.
constexpr double kFlatTolerance = 1e-11;
// Largest increase an accepted step may cause; keeps accepted energies monotone to round-off.
constexpr double kMonotoneSlack = 1e-12;

struct Probe {
  double step = 0.0;
  double f = 0.0;
  double slope = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

class LineSearch {
 public:
  LineSearch(const Objective& objective, const SolveConfig& config, const std::vector<char>& fixed)
      : objective_(objective), config_(config), fixed_(fixed) {}

  // Returns true with `out` set when a strong-Wolfe step was found within the probe budget.
  bool search(const Eigen::VectorXd& x, double f0, double slope0, const Eigen::VectorXd& d, double step0,
              Probe& out) {
    probes_ = 0;
    Probe prev{0.0, f0, slope0, x, {}};
    double step = step0;
    bool first = true;
    while (probes_ < config_.max_probes) {
      Probe cur = evaluate(x, d, step);
      if (!sufficient(cur, f0, slope0) || (!first && !flat(cur, f0) && cur.f >= prev.f))
        return zoom(x, f0, slope0, d, prev, cur, out);
      if (std::abs(cur.slope) <= -config_.c2 * slope0) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(x, f0, slope0, d, cur, prev, out);
      prev = std::move(cur);
      step *= 2.0;
      first = false;
    }
    return false;
  }

  int probes() const { return probes_; }

 private:
  static bool flat(const Probe& p, double f0) { return std::abs(p.f - f0) <= kFlatTolerance * std::abs(f0); }

  // Armijo, or near the minimizer where the decrease is lost in round-off, the approximate form:
  // an increase within the monotonicity slack and a slope not far past zero.
  bool sufficient(const Probe& p, double f0, double slope0) const {
    if (!std::isfinite(p.f)) return false;
    if (p.f <= f0 + config_.c1 * p.step * slope0) return true;
    return p.f <= f0 + kMonotoneSlack * (1.0 + std::abs(f0)) && p.slope <= (2.0 * config_.c1 - 1.0) * slope0;
  }

  Probe evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& d, double step) {
    ++probes_;
    Probe p;
    p.step = step;
    p.x = x + step * d;
    p.f = objective_(p.x, p.g);
    zero_fixed(p.g, fixed_);
    p.slope = p.g.dot(d);
    return p;
  }

  bool zoom(const Eigen::VectorXd& x, double f0, double slope0, const Eigen::VectorXd& d, Probe lo, Probe hi,
            Probe& out) {
    while (probes_ < config_.max_probes) {
      const double a = lo.step, b = hi.step;
      const double width = std::abs(b - a);
      if (width <= 1e-16 * std::max(1.0, std::abs(a))) break;
      double step = std::numeric_limits<double>::quiet_NaN();
      if (flat(lo, f0) && flat(hi, f0)) {
        // Values carry no information here; interpolate the slopes.
        if (hi.slope != lo.slope) step = a - lo.slope * (b - a) / (hi.slope - lo.slope);
      } else if (std::isfinite(hi.f)) {
        step = cubic_minimizer(a, lo.f, lo.slope, b, hi.f, hi.slope);
      }
      const double low = std::min(a, b) + 0.1 * width;
      const double high = std::max(a, b) - 0.1 * width;
      if (!std::isfinite(step) || step < low || step > high) step = 0.5 * (a + b);
      Probe cur = evaluate(x, d, step);
      if (!sufficient(cur, f0, slope0) || (!flat(cur, f0) && cur.f >= lo.f)) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -config_.c2 * slope0) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = std::move(lo);
        lo = std::move(cur);
      }
    }
    return false;
  }

  const Objective& objective_;
  const SolveConfig& config_;
  const std::vector<char>& fixed_;
  int probes_ = 0;
};

}  // namespace

SolveResult minimize(const Objective& objective, Eigen::VectorXd x0, const std::vector<char>& fixed,
                     const SolveConfig& config) {
  config.validate();
  if (fixed.size() != static_cast<std::size_t>(x0.size())) throw InputError("fixed-DOF mask has the wrong length");
  const auto start = std::chrono::steady_clock::now();

  SolveResult result;
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g;
  double f = objective(x, g);
  zero_fixed(g, fixed);
  double gnorm = free_sup_norm(g, fixed);
  result.grad_tol = std::max(config.grad_tol_abs, config.grad_tol_rel * gnorm);
  result.history.push_back({0, f, f > kHistoryFlagThreshold});

  Eigen::VectorXd d = -g;
  Eigen::VectorXd g_prev;
  double f_prev = f + 0.5 * g.norm();
  LineSearch line_search(objective, config, fixed);
  double last_step = 0.0;
  int k = 0;
  bool converged = gnorm <= result.grad_tol;
  for (; k < config.max_iters && !converged; ++k) {
    double slope0 = g.dot(d);
    if (!(slope0 < 0.0)) {
      d = -g;
      slope0 = g.dot(d);
    }
    double step0 = 1.0;
    if (f_prev - f <= kFlatTolerance * std::abs(f) && last_step > 0.0)
      step0 = last_step;
    else if (f_prev > f)
      step0 = std::min(1.0, 1.01 * 2.0 * (f - f_prev) / slope0);
    if (!(step0 > 0.0)) step0 = 1.0;
    if (config.max_step > 0.0) {
      const double dmax = d.cwiseAbs().maxCoeff();
      if (dmax * step0 > config.max_step) step0 = config.max_step / dmax;
    }

    Probe accepted;
    bool ok = line_search.search(x, f, slope0, d, step0, accepted);
    LineSearchRecord record{f, slope0, 0.0, 0.0, 0.0, false};
    if (!ok) {
      // Steepest descent with halving steps.
      d = -g;
      slope0 = g.dot(d);
      double step = step0;
      ok = false;
      for (int h = 0; h < 60 && !ok; ++h, step *= 0.5) {
        Probe p;
        p.step = step;
        p.x = x + step * d;
        p.f = objective(p.x, p.g);
        zero_fixed(p.g, fixed);
        p.slope = p.g.dot(d);
        if (std::isfinite(p.f) && p.f < f) {
          accepted = std::move(p);
          ok = true;
        }
      }
      if (!ok) {
        result.message = "line search failed and steepest-descent fallback found no decrease";
        break;
      }
      record.fallback = true;
      record.slope0 = slope0;
    }
    last_step = accepted.step;
    record.step = accepted.step;
    record.f = accepted.f;
    record.slope = accepted.slope;
    result.line_searches.push_back(record);

    f_prev = f;
    g_prev = std::move(g);
    x = std::move(accepted.x);
    f = accepted.f;
    g = std::move(accepted.g);
    gnorm = free_sup_norm(g, fixed);
    converged = gnorm <= result.grad_tol;

    const int iteration = k + 1;
    if (iteration % config.log_stride == 0) result.history.push_back({iteration, f, f > kHistoryFlagThreshold});

    double beta = 0.0;
    if (iteration % config.restart_period != 0 && !record.fallback) {
      beta = g.dot(g - g_prev) / g_prev.squaredNorm();
      if (!(beta > 0.0)) beta = 0.0;
    }
    d = -g + beta * d;
  }
  if (result.history.back().iteration != k) result.history.push_back({k, f, f > kHistoryFlagThreshold});

  result.x = std::move(x);
  result.iterations = k;
  result.energy = f;
  result.grad_norm = gnorm;
  result.converged = converged;
  if (result.message.empty())
    result.message = converged ? "gradient tolerance reached" : "iteration limit reached";
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

namespace {

// Free-DOF sup-norm gradient of everything except the penalty. The exponential penalty's gradient
// at an arbitrary start (a cold start has a P2 boundary layer with J < 0 at some quadrature points)
// can be astronomically large and says nothing about the scale of the problem.
double tolerance_scale(const EnergyAssembler& energy, const Eigen::VectorXd& u, const std::vector<char>& fixed) {
  Eigen::VectorXd g;
  energy.energy_and_gradient(u, g, kAllTerms & ~kTermPhi);
  return free_sup_norm(g, fixed);
}

}  // namespace

SolveResult minimize(const EnergyAssembler& energy, const Eigen::VectorXd& u0, const std::vector<char>& fixed,
                     const SolveConfig& config) {
  const Objective objective = [&energy](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
    return energy.energy_and_gradient(u, g).total;
  };
  SolveConfig absolute = config;
  if (config.grad_tol_rel > 0.0 && fixed.size() == static_cast<std::size_t>(u0.size())) {
    absolute.grad_tol_abs = std::max(config.grad_tol_abs, config.grad_tol_rel * tolerance_scale(energy, u0, fixed));
    absolute.grad_tol_rel = 0.0;
  }
  SolveResult result = minimize(objective, u0, fixed, absolute);
  result.breakdown = energy.energy(result.x);
  return result;
}

std::vector<SolveResult> continuation_solve(const EnergyAssembler& energy, const std::vector<Circle>& cells,
                                            const std::vector<double>& schedule, const SolveConfig& config) {
  SolveConfig checked = config;
  checked.schedule = schedule;
  checked.validate();
  std::vector<SolveResult> stages;
  double previous = 0.0;
  Eigen::VectorXd x;
  // One tolerance for all stages, scaled at the first stage's cold start. A warm start is already
  // nearly stationary, and a rescaled one can be far from it, so re-basing the relative tolerance
  // per stage would be either unreachable or meaningless.
  SolveConfig stage_config = config;
  for (double delta : schedule) {
    const DirichletSetup setup = apply_dirichlet(energy.space(), cells, BoundaryData::uniform(cells.size(), delta));
    if (previous > 0.0) {
      x *= delta / previous;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (setup.fixed[i]) x[i] = setup.values[i];
    } else {
      x = setup.initial;
      stage_config.grad_tol_abs =
          std::max(config.grad_tol_abs, config.grad_tol_rel * tolerance_scale(energy, x, setup.fixed));
      stage_config.grad_tol_rel = 0.0;
    }
    stages.push_back(minimize(energy, x, setup.fixed, stage_config));
    x = stages.back().x;
    previous = delta;
  }
  return stages;
}

void write_history_csv(const std::vector<HistoryEntry>& history, std::ostream& out) {
  out << "iteration,energy,flagged\n" << std::setprecision(17);
  for (const auto& h : history) out << h.iteration << ',' << h.energy << ',' << (h.flagged ? 1 : 0) << '\n';
}

}  // namespace tetherfem
