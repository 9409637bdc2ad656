#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tetherfem {

using Point = Eigen::Vector2d;

/// Vertex/edge boundary tags. Cell i carries tag `cell_tag(i)`.
inline constexpr int kInteriorTag = 0;
inline constexpr int kOuterTag = 1;
constexpr int cell_tag(int cell) { return 2 + cell; }
constexpr bool is_cell_tag(int tag) { return tag >= 2; }
constexpr int cell_of_tag(int tag) { return tag - 2; }

struct Circle {
  Point center{0.0, 0.0};
  double radius = 1.0;

  bool operator==(const Circle&) const = default;
};

/// Matrix domain: a disk or a rectangle, with circular cells removed.
struct DomainSpec {
  enum class Outer { Disk, Rectangle };

  Outer outer = Outer::Disk;
  double outer_radius = 11.0;  // disk, centered at the origin
  Point rect_min{0.0, 0.0};
  Point rect_max{1.0, 1.0};
  std::vector<Circle> cells;
  double h = 0.5;
  std::uint64_t seed = 0;

  /// Throws InputError on overlapping cells, cells not strictly inside, or h too large.
  void validate() const;
  double nominal_area() const;

  bool operator==(const DomainSpec&) const = default;
};

/// Conforming triangulation. Triangles are counterclockwise.
struct Mesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> vertex_tags;
  /// Analytic boundary curves indexed by tag, used to project refined midpoints.
  std::vector<std::optional<Circle>> curves;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  double signed_area(int t) const;
  double total_area() const;
  Point centroid(int t) const;
  /// Throws TopologyError if a triangle is inverted or degenerate, or tags are missing.
  void check() const;
};

struct InteriorEdge {
  std::array<int, 2> vertices;
  int plus = -1;   // adjacent triangle with the smaller index
  int minus = -1;
  int local_plus = -1;   // local edge index in `plus` (edge opposite local vertex j)
  int local_minus = -1;
  Point normal;  // unit, points from `plus` into `minus`
  double length = 0.0;
};

struct BoundaryEdge {
  std::array<int, 2> vertices;
  int element = -1;
  int local = -1;
  Point normal;  // unit, outward
  double length = 0.0;
  int tag = kInteriorTag;
};

struct EdgeSet {
  std::vector<InteriorEdge> interior;
  std::vector<BoundaryEdge> boundary;
  /// Per triangle and local edge: index into `interior` (>= 0) or -(1 + boundary index).
  std::vector<std::array<int, 3>> element_edges;

  int num_edges() const { return static_cast<int>(interior.size() + boundary.size()); }
};

struct ShapeMetrics {
  double max_h = 0.0;
  double max_ratio = 0.0;  // max h_K / rho_K
  double min_angle = 0.0;  // radians
  double min_h = 0.0;
};

/// Local edge j of a triangle joins local vertices (j+1)%3 and (j+2)%3.
constexpr std::array<int, 2> local_edge_vertices(int j) { return {(j + 1) % 3, (j + 2) % 3}; }

Mesh generate_mesh(const DomainSpec& spec);
/// Structured n_x by n_y grid of the rectangle, each square split along its diagonal.
Mesh structured_rectangle(int nx, int ny, Point lo, Point hi);
EdgeSet build_edges(const Mesh& mesh);
Mesh refine_uniform(const Mesh& mesh);
ShapeMetrics shape_metrics(const Mesh& mesh);

/// Diameter and inradius of triangle t.
double triangle_diameter(const Mesh& mesh, int t);
double triangle_inradius(const Mesh& mesh, int t);

void write_mesh(const Mesh& mesh, std::ostream& out);
void write_mesh(const Mesh& mesh, const std::string& path);
Mesh read_mesh(std::istream& in);
Mesh read_mesh(const std::string& path);

}  // namespace tetherfem
