#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tetherfem/cli_io.hpp"
#include "tetherfem/errors.hpp"

using namespace tetherfem;
namespace fs = std::filesystem;

namespace {

const char* kSmallRun = R"(# one cell, coarse
[domain]
radius = 3
h = 0.8

[cells]
cell = 0 0 1

[model]
epsilon = 0.05
alpha = auto

[solver]
schedule = 0.05, 0.1
log_stride = 10
)";

int config_error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tetherfem_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.degree == 2);
  CHECK(c.epsilon == 5e-3);
  REQUIRE(c.alpha.has_value());
  CHECK(*c.alpha == 10.0);
  CHECK(c.solver.schedule == std::vector<double>{0.2, 0.4, 0.6});
  CHECK(c.domain.outer_radius == 11.0);
  CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("parsing") {
  const RunConfig c = parse_config(kSmallRun);
  CHECK(c.domain.outer_radius == 3.0);
  REQUIRE(c.domain.cells.size() == 1);
  CHECK(c.domain.cells[0].radius == 1.0);
  CHECK_FALSE(c.alpha.has_value());
  CHECK(c.solver.schedule == std::vector<double>{0.05, 0.1});
  CHECK(c.solver.log_stride == 10);

  CHECK(parse_config("[model]\nepsilon = 0\n").epsilon == 0.0);
  CHECK(parse_config("[model]\npenalty = polynomial ; trailing comment\n").material.penalty == PenaltyKind::Polynomial);
}

TEST_CASE("errors carry line numbers") {
  CHECK(config_error_line("[domain]\nh = 0.5\nbogus = 1\n") == 3);
  CHECK(config_error_line("[nowhere]\n") == 1);
  CHECK(config_error_line("h = 0.5\n") == 1);
  CHECK(config_error_line("[domain]\n\nh = 0.5\nh = 0.4\n") == 4);
  CHECK(config_error_line("[domain]\nh = abc\n") == 2);
  CHECK(config_error_line("[cells]\ncell = 0 0 -1\n") == 2);
  CHECK(config_error_line("[output]\nvtk = maybe\n") == 2);
  CHECK(config_error_line("[domain\n") == 1);
  CHECK_THROWS_AS(parse_config("[domain]\nradius = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nepsilon = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[solver]\nschedule = 0.5, 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ndegree = 1\n"), ConfigError);
  try {
    parse_config("[domain]\nh = 0.5\nbogus = 1\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("domain.bogus") != std::string::npos);
  }
}

TEST_CASE("print and parse round trip") {
  RunConfig c = parse_config(kSmallRun);
  CHECK(parse_config(print_config(c)) == c);
  c.alpha = 1.0 / 3.0;
  c.epsilon = 0.1 + 0.2;
  c.material.penalty = PenaltyKind::None;
  c.solver.schedule = {0.1, 0.25, 0.7};
  c.write_vtk = false;
  CHECK(parse_config(print_config(c)) == c);
  const RunConfig d;
  CHECK(parse_config(print_config(d)) == d);
}

TEST_CASE("VTK output") {
  DomainSpec s;
  s.outer = DomainSpec::Outer::Rectangle;
  s.rect_max = {2.0, 1.0};
  s.h = 0.5;
  auto mesh = std::make_shared<const Mesh>(generate_mesh(s));
  auto space = std::make_shared<const Space>(mesh, 2);
  const Field u = interpolate(space, [](const Point& x) { return Vec2(0.1 * x.x(), 0.0); });
  for (double j : element_mean_J(u)) CHECK(j == doctest::Approx(1.1).epsilon(1e-13));

  std::ostringstream out;
  write_vtk(u, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# vtk DataFile Version 3.0");
  const std::string text = out.str();
  CHECK(text.find("DATASET UNSTRUCTURED_GRID") != std::string::npos);
  CHECK(text.find("POINTS " + std::to_string(mesh->num_vertices()) + " double") != std::string::npos);
  CHECK(text.find("CELLS " + std::to_string(mesh->num_triangles())) != std::string::npos);
  CHECK(text.find("VECTORS displacement double") != std::string::npos);

  // Parse the J block back.
  const auto pos = text.find("SCALARS J double 1\nLOOKUP_TABLE default\n");
  REQUIRE(pos != std::string::npos);
  std::istringstream jblock(text.substr(pos));
  std::getline(jblock, line);
  std::getline(jblock, line);
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    double j = 0.0;
    jblock >> j;
    CHECK(j == doctest::Approx(1.1).epsilon(1e-13));
  }
  std::string label;
  jblock >> label;
  CHECK(label == "SCALARS");

  // Points are the deformed vertices.
  std::istringstream pts(text.substr(text.find("POINTS")));
  std::getline(pts, line);
  double x = 0.0, y = 0.0, z = 0.0;
  pts >> x >> y >> z;
  CHECK(x == doctest::Approx(1.1 * mesh->vertices[0].x()).epsilon(1e-14));
  CHECK(y == mesh->vertices[0].y());
}

TEST_CASE("density saturates on collapsed elements") {
  auto mesh = std::make_shared<const Mesh>(structured_rectangle(1, 1, {0, 0}, {1, 1}));
  auto space = std::make_shared<const Space>(mesh, 2);
  const Field u = interpolate(space, [](const Point& x) { return Vec2(-1.5 * x.x(), 0.0); });
  std::ostringstream out;
  write_vtk(u, out);
  const std::string text = out.str();
  std::istringstream d(text.substr(text.find("SCALARS density")));
  std::string line;
  std::getline(d, line);
  std::getline(d, line);
  double v = 0.0;
  d >> v;
  CHECK(v == kMaxDensity);
}

TEST_CASE("rate CSV") {
  const RateReport r = make_report({0.5, 0.25, 0.125}, {1.0, 0.25, 0.0625}, 2.0);
  std::ostringstream out;
  write_rate_csv(r, out);
  std::istringstream in(out.str());
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "h,error");
  CHECK(lines[1] == "0.5,1");
  CHECK(lines[4].rfind("# slope,", 0) == 0);
  CHECK(std::stod(lines[4].substr(8)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(lines[5] == "# target,2");
  CHECK(lines[6] == "# pass,1");
}

TEST_CASE("experiment writes the manifest and stage files") {
  RunConfig c = parse_config(kSmallRun);
  c.output_dir = scratch_dir("run").string();
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.stages.size() == 2);
  for (const auto& s : r.stages) CHECK(s.converged);

  std::vector<std::string> keys;
  for (const auto& [k, v] : r.manifest.items()) keys.push_back(k);
  std::vector<std::string> expected = manifest_keys();
  std::sort(expected.begin(), expected.end());
  std::sort(keys.begin(), keys.end());
  CHECK(keys == expected);
  CHECK(r.manifest["tool"] == "tetherfem");
  CHECK(r.manifest["alpha"].get<double>() == doctest::Approx(2.0 * r.manifest["estimate_CR"]["value"].get<double>()));
  CHECK(parse_config(r.manifest["config_text"].get<std::string>()) == c);

  const fs::path dir(c.output_dir);
  for (const char* f : {"manifest.json", "mesh.txt", "stage0_history.csv", "stage1_history.csv", "stage0.vtk", "stage1.vtk"})
    CHECK(fs::exists(dir / f));
  std::ifstream m(dir / "manifest.json");
  const nlohmann::json loaded = nlohmann::json::parse(m);
  CHECK(loaded == r.manifest);
  std::ifstream mesh_in(dir / "mesh.txt");
  CHECK(read_mesh(mesh_in).num_triangles() == r.space->mesh().num_triangles());
  fs::remove_all(dir);
}

TEST_CASE("auto alpha depends only on the configured seed") {
  RunConfig c = parse_config(kSmallRun);
  c.solver.schedule = {0.0};
  c.write_vtk = false;
  c.output_dir = scratch_dir("a").string();
  const double a1 = run_experiment(c).manifest["estimate_CR"]["value"].get<double>();
  const double a2 = run_experiment(c).manifest["estimate_CR"]["value"].get<double>();
  CHECK(a1 == a2);
  CHECK_FALSE(fs::exists(fs::path(c.output_dir) / "stage0.vtk"));
  fs::remove_all(c.output_dir);
}
