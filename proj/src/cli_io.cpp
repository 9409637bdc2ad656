#include "tetherfem/cli_io.hpp"

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "tetherfem/errors.hpp"

namespace tetherfem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& key, int line) {
  const std::string v = trim(text);
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'", line);
  return out;
}

long long parse_int(const std::string& text, const std::string& key, int line) {
  const std::string v = trim(text);
  long long out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'", line);
  return out;
}

bool parse_bool(const std::string& text, const std::string& key, int line) {
  const std::string v = trim(text);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'", line);
}

std::vector<double> parse_list(const std::string& text, const std::string& key, int line) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::istringstream words(item);
    std::string w;
    while (words >> w) out.push_back(parse_double(w, key, line));
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::Exponential:
      return "exponential";
    case PenaltyKind::Polynomial:
      return "polynomial";
    case PenaltyKind::None:
      return "none";
  }
  return "none";
}

using Setter = std::function<void(const std::string&, int)>;

std::map<std::string, std::map<std::string, Setter>> setters(RunConfig& c) {
  std::map<std::string, std::map<std::string, Setter>> s;
  auto& d = s["domain"];
  d["outer"] = [&c](const std::string& v, int line) {
    const std::string t = trim(v);
    if (t == "disk") c.domain.outer = DomainSpec::Outer::Disk;
    else if (t == "rectangle") c.domain.outer = DomainSpec::Outer::Rectangle;
    else throw ConfigError("domain.outer: expected disk or rectangle", line);
  };
  d["radius"] = [&c](const std::string& v, int line) { c.domain.outer_radius = parse_double(v, "domain.radius", line); };
  d["xmin"] = [&c](const std::string& v, int line) { c.domain.rect_min.x() = parse_double(v, "domain.xmin", line); };
  d["ymin"] = [&c](const std::string& v, int line) { c.domain.rect_min.y() = parse_double(v, "domain.ymin", line); };
  d["xmax"] = [&c](const std::string& v, int line) { c.domain.rect_max.x() = parse_double(v, "domain.xmax", line); };
  d["ymax"] = [&c](const std::string& v, int line) { c.domain.rect_max.y() = parse_double(v, "domain.ymax", line); };
  d["h"] = [&c](const std::string& v, int line) { c.domain.h = parse_double(v, "domain.h", line); };
  d["seed"] = [&c](const std::string& v, int line) {
    c.domain.seed = static_cast<std::uint64_t>(parse_int(v, "domain.seed", line));
  };

  s["cells"]["cell"] = [&c](const std::string& v, int line) {
    const auto xs = parse_list(v, "cells.cell", line);
    if (xs.size() != 3) throw ConfigError("cells.cell: expected 'x y radius'", line);
    if (!(xs[2] > 0.0)) throw ConfigError("cells.cell: radius must be positive", line);
    c.domain.cells.push_back(Circle{{xs[0], xs[1]}, xs[2]});
  };

  auto& m = s["model"];
  m["degree"] = [&c](const std::string& v, int line) { c.degree = static_cast<int>(parse_int(v, "model.degree", line)); };
  m["epsilon"] = [&c](const std::string& v, int line) { c.epsilon = parse_double(v, "model.epsilon", line); };
  m["alpha"] = [&c](const std::string& v, int line) {
    if (trim(v) == "auto") c.alpha.reset();
    else c.alpha = parse_double(v, "model.alpha", line);
  };
  m["penalty"] = [&c](const std::string& v, int line) {
    const std::string t = trim(v);
    if (t == "exponential") c.material.penalty = PenaltyKind::Exponential;
    else if (t == "polynomial") c.material.penalty = PenaltyKind::Polynomial;
    else if (t == "none") c.material.penalty = PenaltyKind::None;
    else throw ConfigError("model.penalty: expected exponential, polynomial or none", line);
  };
  m["exp_a"] = [&c](const std::string& v, int line) { c.material.exp_a = parse_double(v, "model.exp_a", line); };
  m["exp_b"] = [&c](const std::string& v, int line) { c.material.exp_b = parse_double(v, "model.exp_b", line); };
  m["poly_c0"] = [&c](const std::string& v, int line) { c.material.poly_c0 = parse_double(v, "model.poly_c0", line); };
  m["poly_m0"] = [&c](const std::string& v, int line) { c.material.poly_m0 = parse_double(v, "model.poly_m0", line); };
  m["poly_c1"] = [&c](const std::string& v, int line) { c.material.poly_c1 = parse_double(v, "model.poly_c1", line); };
  m["strain_energy"] = [&c](const std::string& v, int line) {
    c.material.strain_energy = parse_bool(v, "model.strain_energy", line);
  };
  m["cell_quadrature"] = [&c](const std::string& v, int line) {
    c.cell_quadrature = static_cast<int>(parse_int(v, "model.cell_quadrature", line));
  };
  m["edge_quadrature"] = [&c](const std::string& v, int line) {
    c.edge_quadrature = static_cast<int>(parse_int(v, "model.edge_quadrature", line));
  };

  auto& so = s["solver"];
  so["schedule"] = [&c](const std::string& v, int line) { c.solver.schedule = parse_list(v, "solver.schedule", line); };
  so["max_iters"] = [&c](const std::string& v, int line) {
    c.solver.max_iters = static_cast<int>(parse_int(v, "solver.max_iters", line));
  };
  so["grad_tol_rel"] = [&c](const std::string& v, int line) {
    c.solver.grad_tol_rel = parse_double(v, "solver.grad_tol_rel", line);
  };
  so["grad_tol_abs"] = [&c](const std::string& v, int line) {
    c.solver.grad_tol_abs = parse_double(v, "solver.grad_tol_abs", line);
  };
  so["c1"] = [&c](const std::string& v, int line) { c.solver.c1 = parse_double(v, "solver.c1", line); };
  so["c2"] = [&c](const std::string& v, int line) { c.solver.c2 = parse_double(v, "solver.c2", line); };
  so["max_probes"] = [&c](const std::string& v, int line) {
    c.solver.max_probes = static_cast<int>(parse_int(v, "solver.max_probes", line));
  };
  so["restart_period"] = [&c](const std::string& v, int line) {
    c.solver.restart_period = static_cast<int>(parse_int(v, "solver.restart_period", line));
  };
  so["max_step"] = [&c](const std::string& v, int line) { c.solver.max_step = parse_double(v, "solver.max_step", line); };
  so["log_stride"] = [&c](const std::string& v, int line) {
    c.solver.log_stride = static_cast<int>(parse_int(v, "solver.log_stride", line));
  };
  so["seed"] = [&c](const std::string& v, int line) {
    c.solver.seed = static_cast<std::uint64_t>(parse_int(v, "solver.seed", line));
  };
  so["threads"] = [&c](const std::string& v, int line) { c.threads = static_cast<int>(parse_int(v, "solver.threads", line)); };

  auto& o = s["output"];
  o["dir"] = [&c](const std::string& v, int) { c.output_dir = trim(v); };
  o["vtk"] = [&c](const std::string& v, int line) { c.write_vtk = parse_bool(v, "output.vtk", line); };
  return s;
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what, 0); };
  if (!(domain.h > 0.0)) fail("domain.h: must be positive");
  if (domain.outer == DomainSpec::Outer::Disk && !(domain.outer_radius > 0.0)) fail("domain.radius: must be positive");
  for (const auto& c : domain.cells)
    if (!(c.radius > 0.0)) fail("cells.cell: radius must be positive");
  try {
    domain.validate();
  } catch (const InputError& e) {
    fail(std::string("domain: ") + e.what());
  }
  if (degree < 2 || degree > 6) fail("model.degree: must be between 2 and 6");
  if (!(epsilon >= 0.0)) fail("model.epsilon: must be non-negative");
  if (alpha && !(*alpha > 0.0)) fail("model.alpha: must be positive or auto");
  if (!(material.exp_a > 0.0)) fail("model.exp_a: must be positive");
  if (!(material.poly_c0 >= 0.0)) fail("model.poly_c0: must be non-negative");
  if (!(material.poly_m0 >= 1.0)) fail("model.poly_m0: must be at least 1");
  if (cell_quadrature < 0 || cell_quadrature > 20) fail("model.cell_quadrature: must be in [0, 20]");
  if (edge_quadrature < 0 || edge_quadrature > 20) fail("model.edge_quadrature: must be in [0, 20]");
  if (solver.schedule.empty()) fail("solver.schedule: needs at least one contraction fraction");
  try {
    solver.validate();
  } catch (const InputError& e) {
    fail(std::string("solver: ") + e.what());
  }
  if (threads < 1) fail("solver.threads: must be positive");
  if (output_dir.empty()) fail("output.dir: must not be empty");
}

EnergyParams RunConfig::energy_params(double alpha_value) const {
  EnergyParams p;
  p.epsilon = epsilon;
  p.alpha = alpha_value;
  p.material = material;
  p.cell_degree = cell_quadrature;
  p.edge_degree = edge_quadrature;
  p.threads = threads;
  return p;
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  c.domain.cells.clear();
  auto table = setters(c);
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (const auto hash = s.find_first_of("#;"); hash != std::string::npos) s.erase(hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header", line);
      section = trim(s.substr(1, s.size() - 2));
      if (!table.count(section)) throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line);
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside of any section", line);
    const auto& keys = table.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown key " + section + "." + key, line);
    const std::string full = section + "." + key;
    if (full != "cells.cell" && !seen.insert(full).second) throw ConfigError("duplicate key " + full, line);
    it->second(value, line);
  }
  c.validate();
  return c;
}

RunConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string print_config(const RunConfig& c) {
  std::ostringstream out;
  out << "[domain]\n"
      << "outer = " << (c.domain.outer == DomainSpec::Outer::Disk ? "disk" : "rectangle") << "\n"
      << "radius = " << fmt(c.domain.outer_radius) << "\n"
      << "xmin = " << fmt(c.domain.rect_min.x()) << "\n"
      << "ymin = " << fmt(c.domain.rect_min.y()) << "\n"
      << "xmax = " << fmt(c.domain.rect_max.x()) << "\n"
      << "ymax = " << fmt(c.domain.rect_max.y()) << "\n"
      << "h = " << fmt(c.domain.h) << "\n"
      << "seed = " << c.domain.seed << "\n\n[cells]\n";
  for (const auto& cell : c.domain.cells)
    out << "cell = " << fmt(cell.center.x()) << " " << fmt(cell.center.y()) << " " << fmt(cell.radius) << "\n";
  out << "\n[model]\n"
      << "degree = " << c.degree << "\n"
      << "epsilon = " << fmt(c.epsilon) << "\n"
      << "alpha = " << (c.alpha ? fmt(*c.alpha) : "auto") << "\n"
      << "penalty = " << penalty_name(c.material.penalty) << "\n"
      << "exp_a = " << fmt(c.material.exp_a) << "\n"
      << "exp_b = " << fmt(c.material.exp_b) << "\n"
      << "poly_c0 = " << fmt(c.material.poly_c0) << "\n"
      << "poly_m0 = " << fmt(c.material.poly_m0) << "\n"
      << "poly_c1 = " << fmt(c.material.poly_c1) << "\n"
      << "strain_energy = " << (c.material.strain_energy ? "true" : "false") << "\n"
      << "cell_quadrature = " << c.cell_quadrature << "\n"
      << "edge_quadrature = " << c.edge_quadrature << "\n\n[solver]\n"
      << "schedule = ";
  for (std::size_t i = 0; i < c.solver.schedule.size(); ++i) out << (i ? ", " : "") << fmt(c.solver.schedule[i]);
  out << "\n"
      << "max_iters = " << c.solver.max_iters << "\n"
      << "grad_tol_rel = " << fmt(c.solver.grad_tol_rel) << "\n"
      << "grad_tol_abs = " << fmt(c.solver.grad_tol_abs) << "\n"
      << "c1 = " << fmt(c.solver.c1) << "\n"
      << "c2 = " << fmt(c.solver.c2) << "\n"
      << "max_probes = " << c.solver.max_probes << "\n"
      << "restart_period = " << c.solver.restart_period << "\n"
      << "max_step = " << fmt(c.solver.max_step) << "\n"
      << "log_stride = " << c.solver.log_stride << "\n"
      << "seed = " << c.solver.seed << "\n"
      << "threads = " << c.threads << "\n\n[output]\n"
      << "dir = " << c.output_dir << "\n"
      << "vtk = " << (c.write_vtk ? "true" : "false") << "\n";
  return out.str();
}

std::vector<double> element_mean_J(const Field& u) {
  const Space& space = *u.space;
  const Quadrature rule = cell_rule(2 * (space.degree() - 1));
  std::vector<Eigen::MatrixXd> grads;
  for (const auto& p : rule.points) grads.push_back(space.basis().gradients(p));
  std::vector<double> out(space.mesh().num_triangles());
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const ElementMap& map = space.map(t);
    const Eigen::MatrixXd U = u.local(t);
    double sum = 0.0, area = 0.0;
    for (int k = 0; k < rule.size(); ++k) {
      const Mat2 g = U.transpose() * map.physical_gradients(grads[k]);
      sum += rule.weights[k] * DefGrad::from_displacement_gradient(g).J();
      area += rule.weights[k];
    }
    out[t] = sum / area;
  }
  return out;
}

void write_vtk(const Field& u, std::ostream& out) {
  const Space& space = *u.space;
  const Mesh& mesh = space.mesh();
  // Vertex nodes come first in every element's node list.
  std::vector<int> vertex_node(mesh.num_vertices(), -1);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto nodes = space.element_nodes(t);
    for (int a = 0; a < 3; ++a) vertex_node[mesh.triangles[t][a]] = nodes[a];
  }
  const std::vector<double> J = element_mean_J(u);
  out << std::setprecision(17);
  out << "# vtk DataFile Version 3.0\ntetherfem deformed state\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int g = vertex_node[v];
    out << mesh.vertices[v].x() + u.coeffs[2 * g] << ' ' << mesh.vertices[v].y() + u.coeffs[2 * g + 1] << " 0\n";
  }
  out << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << "\n";
  for (const auto& tri : mesh.triangles) out << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << "\n";
  out << "CELL_TYPES " << mesh.num_triangles() << "\n";
  for (int t = 0; t < mesh.num_triangles(); ++t) out << "5\n";
  out << "POINT_DATA " << mesh.num_vertices() << "\nVECTORS displacement double\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int g = vertex_node[v];
    out << u.coeffs[2 * g] << ' ' << u.coeffs[2 * g + 1] << " 0\n";
  }
  out << "CELL_DATA " << mesh.num_triangles() << "\nSCALARS J double 1\nLOOKUP_TABLE default\n";
  for (double j : J) out << j << "\n";
  out << "SCALARS density double 1\nLOOKUP_TABLE default\n";
  // Inverted or nearly collapsed elements saturate at the cap.
  for (double j : J) out << (j > 1.0 / kMaxDensity ? 1.0 / j : kMaxDensity) << "\n";
}

void write_vtk(const Field& u, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_vtk(u, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_rate_csv(const RateReport& report, std::ostream& out) {
  out << std::setprecision(17) << "h,error\n";
  for (std::size_t i = 0; i < report.h.size(); ++i) out << report.h[i] << ',' << report.errors[i] << "\n";
  out << "# slope," << report.slope << "\n# target," << report.target << "\n# pass," << (report.pass ? 1 : 0) << "\n";
}

const std::vector<std::string>& manifest_keys() {
  static const std::vector<std::string> keys{"tool",        "config", "config_text", "mesh",
                                             "alpha",       "estimate_CR", "stages", "timings"};
  return keys;
}

namespace {

nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  j["domain"] = {{"outer", c.domain.outer == DomainSpec::Outer::Disk ? "disk" : "rectangle"},
                 {"radius", c.domain.outer_radius},
                 {"xmin", c.domain.rect_min.x()},
                 {"ymin", c.domain.rect_min.y()},
                 {"xmax", c.domain.rect_max.x()},
                 {"ymax", c.domain.rect_max.y()},
                 {"h", c.domain.h},
                 {"seed", c.domain.seed}};
  j["cells"] = nlohmann::json::array();
  for (const auto& cell : c.domain.cells) j["cells"].push_back({cell.center.x(), cell.center.y(), cell.radius});
  j["model"] = {{"degree", c.degree},
                {"epsilon", c.epsilon},
                {"alpha", c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json("auto")},
                {"penalty", penalty_name(c.material.penalty)},
                {"exp_a", c.material.exp_a},
                {"exp_b", c.material.exp_b},
                {"poly_c0", c.material.poly_c0},
                {"poly_m0", c.material.poly_m0},
                {"poly_c1", c.material.poly_c1},
                {"strain_energy", c.material.strain_energy},
                {"cell_quadrature", c.cell_quadrature},
                {"edge_quadrature", c.edge_quadrature}};
  j["solver"] = {{"schedule", c.solver.schedule},
                 {"max_iters", c.solver.max_iters},
                 {"grad_tol_rel", c.solver.grad_tol_rel},
                 {"grad_tol_abs", c.solver.grad_tol_abs},
                 {"c1", c.solver.c1},
                 {"c2", c.solver.c2},
                 {"max_probes", c.solver.max_probes},
                 {"restart_period", c.solver.restart_period},
                 {"max_step", c.solver.max_step},
                 {"log_stride", c.solver.log_stride},
                 {"seed", c.solver.seed},
                 {"threads", c.threads}};
  j["output"] = {{"dir", c.output_dir}, {"vtk", c.write_vtk}};
  return j;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);

  ExperimentResult result;
  nlohmann::json& m = result.manifest;
  m["tool"] = "tetherfem";
  m["config"] = config_json(config);
  m["config_text"] = print_config(config);

  auto t = std::chrono::steady_clock::now();
  auto mesh = std::make_shared<Mesh>(generate_mesh(config.domain));
  write_mesh(*mesh, (dir / "mesh.txt").string());
  result.space = std::make_shared<Space>(mesh, config.degree);
  const ShapeMetrics shape = shape_metrics(*mesh);
  m["mesh"] = {{"file", "mesh.txt"},
               {"vertices", mesh->num_vertices()},
               {"triangles", mesh->num_triangles()},
               {"dofs", result.space->num_dofs()},
               {"max_h", shape.max_h},
               {"min_h", shape.min_h},
               {"max_ratio", shape.max_ratio},
               {"min_angle_deg", shape.min_angle * 180.0 / std::numbers::pi}};
  const double mesh_seconds = seconds_since(t);

  t = std::chrono::steady_clock::now();
  double alpha = config.alpha.value_or(0.0);
  m["estimate_CR"] = nullptr;
  if (!config.alpha) {
    const CrEstimate cr = estimate_CR(result.space, 300, config.solver.seed);
    alpha = 2.0 * cr.value;
    m["estimate_CR"] = {{"value", cr.value}, {"iterations", cr.iterations}, {"last_change", cr.last_change}};
  }
  m["alpha"] = alpha;
  const double alpha_seconds = seconds_since(t);

  t = std::chrono::steady_clock::now();
  const EnergyAssembler assembler(result.space, config.energy_params(alpha));
  result.stages = continuation_solve(assembler, config.domain.cells, config.solver.schedule, config.solver);
  const double solve_seconds = seconds_since(t);

  m["stages"] = nlohmann::json::array();
  for (std::size_t k = 0; k < result.stages.size(); ++k) {
    const SolveResult& s = result.stages[k];
    const std::string stem = "stage" + std::to_string(k);
    {
      std::ofstream csv(dir / (stem + "_history.csv"));
      write_history_csv(s.history, csv);
    }
    nlohmann::json stage = {{"contraction", config.solver.schedule[k]},
                            {"converged", s.converged},
                            {"iterations", s.iterations},
                            {"energy", s.energy},
                            {"grad_norm", s.grad_norm},
                            {"grad_tol", s.grad_tol},
                            {"message", s.message},
                            {"seconds", s.seconds},
                            {"history_csv", stem + "_history.csv"},
                            {"breakdown",
                             {{"bulk_W", s.breakdown.bulk_W},
                              {"bulk_Phi", s.breakdown.bulk_Phi},
                              {"hess_term", s.breakdown.hess_term},
                              {"consistency_term", s.breakdown.consistency_term},
                              {"penalty_term", s.breakdown.penalty_term},
                              {"total", s.breakdown.total},
                              {"penalty_overflow", s.breakdown.penalty_overflow}}}};
    if (config.write_vtk) {
      write_vtk(Field(result.space, s.x), (dir / (stem + ".vtk")).string());
      stage["vtk"] = stem + ".vtk";
    }
    m["stages"].push_back(stage);
  }
  m["timings"] = {{"mesh", mesh_seconds}, {"alpha", alpha_seconds}, {"solve", solve_seconds},
                  {"total", seconds_since(start)}};

  std::ofstream out(dir / "manifest.json");
  out << std::setw(2) << m << "\n";
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  return result;
}

}  // namespace tetherfem
