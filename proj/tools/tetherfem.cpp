// Command-line front end: mesh, solve, verify, rates.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include <CLI11.hpp>

#include "tetherfem/cli_io.hpp"
#include "tetherfem/errors.hpp"

using namespace tetherfem;

namespace {

struct Check {
  std::string name;
  double value;
  double limit;
  bool pass;
};

void report(const Check& c) {
  std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.value << " (limit " << c.limit << ")\n";
}

// Quick self-consistency battery on a small mesh built from the config's geometry and model.
int run_verify(const RunConfig& cfg, std::uint64_t seed) {
  auto mesh = std::make_shared<Mesh>(generate_mesh(cfg.domain));
  auto space = std::make_shared<Space>(mesh, cfg.degree);
  std::cout << "mesh: " << mesh->num_triangles() << " triangles, " << space->num_dofs() << " dofs\n";
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.05);
  auto random_vector = [&] {
    Eigen::VectorXd v(space->num_dofs());
    for (auto& x : v) x = normal(rng);
    return v;
  };

  std::vector<Check> checks;
  const double alpha = cfg.alpha.value_or(10.0);
  {
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      const Field u(space, random_vector());
      const double a = psi_ho_edge_form(u, alpha);
      const double b = psi_ho_discrete_gradient_form(u, alpha);
      worst = std::max(worst, std::abs(a - b) / (1.0 + std::abs(a)));
    }
    checks.push_back({"energy forms agree", worst, 1e-10, worst <= 1e-10});
  }
  {
    const EnergyAssembler assembler(space, cfg.energy_params(alpha));
    const Eigen::VectorXd u = random_vector();
    Eigen::VectorXd g;
    assembler.energy_and_gradient(u, g);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
      const Eigen::VectorXd d = random_vector();
      const double h = 1e-6;
      const double fd = (assembler.energy(u + h * d).total - assembler.energy(u - h * d).total) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g.dot(d)) / std::max(1e-12, std::abs(g.dot(d))));
    }
    checks.push_back({"gradient vs central differences", worst, 1e-6, worst <= 1e-6});
  }
  {
    const CrEstimate cr = estimate_CR(space);
    checks.push_back({"C_R estimate positive", cr.value, 0.0, cr.value > 0.0});
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 20; ++i)
      worst = std::min(worst, psi_ho_edge_form(Field(space, random_vector()), 2.0 * cr.value));
    checks.push_back({"higher-order energy >= 0 at alpha = 2 C_R", worst, -1e-12, worst >= -1e-12});
  }
  {
    const CoercivityScan scan = coercivity_scan(201);
    checks.push_back({"strain energy lower bound", scan.worst_margin, -1e-12, scan.worst_margin >= -1e-12});
  }
  bool ok = true;
  for (const auto& c : checks) {
    report(c);
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}

int run_rates(const std::string& study, int levels, const std::string& norm, int r, const std::string& out_path) {
  RateReport rep;
  if (study == "interp") {
    const InterpStudy s = interp_rate_study(trig_field(), levels);
    if (norm == "l2") rep = s.l2;
    else if (norm == "h1") rep = s.h1;
    else rep = s.broken_h2;
  } else if (study == "jump") {
    const JumpStudy s = jump_decay_study(trig_field(), levels);
    rep = norm == "consistency" ? s.consistency : s.jump;
  } else {
    // Constants should not drift with h: report them against h with target slope 0.
    std::vector<double> h, values;
    for (const auto& mesh : unit_square_levels(levels)) {
      auto space = std::make_shared<Space>(mesh, 2);
      h.push_back(shape_metrics(*mesh).max_h);
      values.push_back(study == "trace" ? trace_constant_probe(*space) : poincare_probe(space, r));
    }
    rep = make_report(h, values, 0.0);
  }
  if (out_path.empty() || out_path == "-") {
    write_rate_csv(rep, std::cout);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    write_rate_csv(rep, out);
  }
  std::cerr << study << ": slope " << rep.slope << " target " << rep.target << (rep.pass ? " pass" : " FAIL") << "\n";
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Higher-gradient regularized fiber-network mechanics on triangular meshes"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  int threads = 0;
  long long seed = -1;
  bool auto_alpha = false;

  auto* mesh_cmd = app.add_subcommand("mesh", "Generate a mesh from the [domain] and [cells] sections");
  mesh_cmd->add_option("--config,--spec", config_path, "Run configuration")->required()->check(CLI::ExistingFile);
  mesh_cmd->add_option("--out", out_path, "Mesh file to write")->required();
  mesh_cmd->add_option("--seed", seed, "Override the mesh jitter seed");

  auto* solve_cmd = app.add_subcommand("solve", "Mesh, solve with continuation, write VTK/CSV/manifest");
  solve_cmd->add_option("--config", config_path, "Run configuration")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--out", out_path, "Output directory (overrides [output] dir)");
  solve_cmd->add_option("--threads", threads, "Assembly worker threads")->check(CLI::PositiveNumber);
  solve_cmd->add_option("--seed", seed, "Override mesh and solver seeds");
  solve_cmd->add_flag("--auto-alpha", auto_alpha, "Use alpha = 2 * estimated C_R");

  auto* verify_cmd = app.add_subcommand("verify", "Consistency checks on the configured geometry");
  verify_cmd->add_option("--config", config_path, "Run configuration")->check(CLI::ExistingFile);
  verify_cmd->add_option("--seed", seed, "Seed for random fields");
  verify_cmd->add_option("--threads", threads, "Assembly worker threads")->check(CLI::PositiveNumber);
  verify_cmd->add_flag("--auto-alpha", auto_alpha, "Use alpha = 2 * estimated C_R");

  std::string study = "interp", norm = "l2";
  int levels = 4, r = 2;
  auto* rates_cmd = app.add_subcommand("rates", "Convergence-rate and constant-stability studies");
  rates_cmd->add_option("--study", study, "Study")->check(CLI::IsMember({"interp", "jump", "trace", "poincare"}));
  rates_cmd->add_option("--levels", levels, "Number of mesh levels (>= 3)")->check(CLI::Range(3, 8));
  rates_cmd->add_option("--norm", norm, "interp: l2|h1|h2; jump: jump|consistency")
      ->check(CLI::IsMember({"l2", "h1", "h2", "jump", "consistency"}));
  rates_cmd->add_option("--r", r, "Poincare exponent")->check(CLI::IsMember({2, 4}));
  rates_cmd->add_option("--out", out_path, "CSV report (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      RunConfig cfg = config_path.empty() ? RunConfig{} : read_config(config_path);
      if (config_path.empty()) {
        cfg.domain.outer_radius = 4.0;
        cfg.domain.cells = {Circle{{0.0, 0.0}, 1.0}};
        cfg.domain.h = 0.6;
      }
      if (seed >= 0) {
        cfg.domain.seed = static_cast<std::uint64_t>(seed);
        cfg.solver.seed = static_cast<std::uint64_t>(seed);
      }
      if (threads > 0) cfg.threads = threads;
      if (auto_alpha) cfg.alpha.reset();
      cfg.validate();
      return cfg;
    };

    if (*mesh_cmd) {
      const RunConfig cfg = load();
      const Mesh mesh = generate_mesh(cfg.domain);
      write_mesh(mesh, out_path);
      const ShapeMetrics s = shape_metrics(mesh);
      std::cout << mesh.num_vertices() << " vertices, " << mesh.num_triangles() << " triangles, max h " << s.max_h
                << ", max h/rho " << s.max_ratio << "\n";
      return 0;
    }
    if (*solve_cmd) {
      RunConfig cfg = load();
      if (!out_path.empty()) cfg.output_dir = out_path;
      const ExperimentResult res = run_experiment(cfg);
      bool ok = true;
      for (std::size_t k = 0; k < res.stages.size(); ++k) {
        const SolveResult& s = res.stages[k];
        std::cout << "stage " << k << " delta " << cfg.solver.schedule[k] << ": " << s.message << ", "
                  << s.iterations << " iterations, energy " << s.energy << "\n";
        ok = ok && s.converged;
      }
      std::cout << "alpha " << res.manifest["alpha"].get<double>() << ", outputs in " << cfg.output_dir << "\n";
      return ok ? 0 : 2;
    }
    if (*verify_cmd) {
      const RunConfig cfg = load();
      return run_verify(cfg, seed >= 0 ? static_cast<std::uint64_t>(seed) : 1);
    }
    return run_rates(study, levels, norm, r, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
