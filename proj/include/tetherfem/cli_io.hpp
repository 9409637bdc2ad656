#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tetherfem/solver.hpp"
#include "tetherfem/verify.hpp"

namespace tetherfem {

/// Everything that determines a run. Sections: [domain] [cells] [model] [solver] [output].
struct RunConfig {
  DomainSpec domain;
  int degree = 2;
  double epsilon = 5e-3;
  std::optional<double> alpha = 10.0;  // empty selects 2 * estimate_CR
  MaterialModel material;
  int cell_quadrature = 6;
  int edge_quadrature = 0;  // 0 selects 2q
  SolveConfig solver = default_solver();
  int threads = 1;
  std::string output_dir = "out";
  bool write_vtk = true;

  static SolveConfig default_solver() {
    SolveConfig s;
    s.schedule = {0.2, 0.4, 0.6};
    return s;
  }
  /// Throws ConfigError naming the offending key.
  void validate() const;
  EnergyParams energy_params(double alpha_value) const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses the INI-style text. Unknown sections or keys, duplicates and malformed values throw
/// ConfigError with the line number.
RunConfig parse_config(const std::string& text);
RunConfig read_config(const std::string& path);
/// Prints every field so that parse_config(print_config(c)) == c.
std::string print_config(const RunConfig& config);

/// Legacy-VTK ASCII unstructured grid on the deformed vertices x + u(x), with point data
/// `displacement` and cell data `J` (element mean) and `density` = 1/J clamped to [0, 50].
void write_vtk(const Field& u, std::ostream& out);
void write_vtk(const Field& u, const std::string& path);

inline constexpr double kMaxDensity = 50.0;

/// Mean of det(1 + grad u) over each triangle.
std::vector<double> element_mean_J(const Field& u);

/// `h,error` rows followed by a `# slope,...` footer.
void write_rate_csv(const RateReport& report, std::ostream& out);

struct ExperimentResult {
  nlohmann::json manifest;
  std::shared_ptr<const Space> space;
  std::vector<SolveResult> stages;
};

/// Mesh, continuation solve, VTK and CSV per stage, and manifest.json in config.output_dir.
ExperimentResult run_experiment(const RunConfig& config);

/// Top-level manifest keys; every run writes exactly these.
const std::vector<std::string>& manifest_keys();

}  // namespace tetherfem
