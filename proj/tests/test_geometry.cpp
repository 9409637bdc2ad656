#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "tetherfem/errors.hpp"
#include "tetherfem/geometry.hpp"

using namespace tetherfem;

namespace {

Mesh single_triangle(Point a, Point b, Point c) {
  Mesh m;
  m.vertices = {a, b, c};
  m.triangles = {{0, 1, 2}};
  m.vertex_tags = {kOuterTag, kOuterTag, kOuterTag};
  return m;
}

Mesh two_triangles() {
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.vertex_tags.assign(4, kOuterTag);
  return m;
}

Point centroid(const Mesh& m, int t) {
  const auto& tri = m.triangles[t];
  return (m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0;
}

DomainSpec two_cell_disk() {
  DomainSpec s;
  s.outer_radius = 11.0;
  s.cells = {Circle{{-2.5, 0.0}, 1.0}, Circle{{2.5, 0.0}, 1.0}};
  s.h = 0.5;
  return s;
}

std::set<int> tags_of(const Mesh& m) { return {m.vertex_tags.begin(), m.vertex_tags.end()}; }

}  // namespace

TEST_CASE("single triangle has three boundary edges and refines into four") {
  const Mesh m = single_triangle({0, 0}, {1, 0}, {0, 1});
  const EdgeSet e = build_edges(m);
  CHECK(e.interior.empty());
  CHECK(e.boundary.size() == 3);
  const Mesh r = refine_uniform(m);
  CHECK(r.num_triangles() == 4);
  CHECK(r.total_area() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("two triangles sharing an edge") {
  const Mesh m = two_triangles();
  const EdgeSet e = build_edges(m);
  REQUIRE(e.interior.size() == 1);
  CHECK(e.boundary.size() == 4);
  const InteriorEdge& ie = e.interior[0];
  CHECK(ie.plus == 0);
  CHECK(ie.minus == 1);
  CHECK(ie.normal.norm() == doctest::Approx(1.0).epsilon(1e-15));
  // Normal points from K+ to K-.
  CHECK(ie.normal.dot(centroid(m, 1) - centroid(m, 0)) > 0.0);
  CHECK(ie.length == doctest::Approx(std::numbers::sqrt2));
  for (const auto& b : e.boundary) {
    // Outward: away from the owning triangle's centroid.
    const Point mid = 0.5 * (m.vertices[b.vertices[0]] + m.vertices[b.vertices[1]]);
    CHECK(b.normal.dot(mid - centroid(m, b.element)) > 0.0);
  }
}

TEST_CASE("structured grid edge counts match brute-force enumeration and Euler") {
  for (int n : {1, 3, 6}) {
    const Mesh m = structured_rectangle(n, n, {0, 0}, {1, 1});
    std::map<std::pair<int, int>, int> seen;
    for (const auto& t : m.triangles)
      for (int j = 0; j < 3; ++j) {
        const int a = t[(j + 1) % 3], b = t[(j + 2) % 3];
        ++seen[{std::min(a, b), std::max(a, b)}];
      }
    std::size_t interior = 0;
    for (const auto& [k, c] : seen) interior += c == 2;
    const EdgeSet e = build_edges(m);
    CHECK(e.interior.size() == interior);
    CHECK(e.boundary.size() == seen.size() - interior);
    // V - E + F = 1 on a simply connected polygon.
    CHECK(e.num_edges() == m.num_vertices() + m.num_triangles() - 1);
    CHECK(e.boundary.size() == static_cast<std::size_t>(4 * n));
  }
}

TEST_CASE("every triangle edge is classified exactly once") {
  const Mesh m = generate_mesh(two_cell_disk());
  const EdgeSet e = build_edges(m);
  std::vector<int> hits(e.num_edges(), 0);
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int j = 0; j < 3; ++j) {
      const int id = e.element_edges[t][j];
      ++hits[id >= 0 ? id : static_cast<int>(e.interior.size()) + (-id - 1)];
    }
  for (std::size_t i = 0; i < e.interior.size(); ++i) CHECK(hits[i] == 2);
  for (std::size_t i = e.interior.size(); i < hits.size(); ++i) CHECK(hits[i] == 1);
  for (const auto& ie : e.interior) {
    CHECK(ie.plus < ie.minus);
    CHECK(ie.normal.dot(centroid(m, ie.minus) - centroid(m, ie.plus)) > 0.0);
  }
}

TEST_CASE("edge orientation is deterministic") {
  const Mesh m = generate_mesh(two_cell_disk());
  const EdgeSet a = build_edges(m), b = build_edges(m);
  REQUIRE(a.interior.size() == b.interior.size());
  for (std::size_t i = 0; i < a.interior.size(); ++i) {
    CHECK(a.interior[i].plus == b.interior[i].plus);
    CHECK(a.interior[i].normal == b.interior[i].normal);
  }
}

TEST_CASE("shape metrics of reference triangles") {
  const double s = 1.7;
  const Mesh eq = single_triangle({0, 0}, {s, 0}, {s / 2, s * std::sqrt(3.0) / 2});
  const ShapeMetrics m = shape_metrics(eq);
  CHECK(m.max_h == doctest::Approx(s).epsilon(1e-14));
  CHECK(m.max_ratio == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-13));
  CHECK(triangle_inradius(eq, 0) == doctest::Approx(s / (2.0 * std::sqrt(3.0))).epsilon(1e-13));
  CHECK(m.min_angle == doctest::Approx(std::numbers::pi / 3).epsilon(1e-13));

  const Mesh right = single_triangle({0, 0}, {1, 0}, {0, 1});
  CHECK(shape_metrics(right).max_h == doctest::Approx(std::numbers::sqrt2).epsilon(1e-15));
}

TEST_CASE("two-cell disk mesh") {
  const DomainSpec spec = two_cell_disk();
  const Mesh m = generate_mesh(spec);
  m.check();
  CHECK(tags_of(m) == std::set<int>{kInteriorTag, kOuterTag, cell_tag(0), cell_tag(1)});
  CHECK(m.total_area() == doctest::Approx(spec.nominal_area()).epsilon(0.01));

  // Boundary vertices lie on their circles; chords sag at most h^2 / (8 r).
  const EdgeSet e = build_edges(m);
  for (const auto& b : e.boundary) {
    const Circle c = b.tag == kOuterTag ? Circle{{0, 0}, spec.outer_radius} : spec.cells[cell_of_tag(b.tag)];
    for (int v : b.vertices) CHECK(std::abs((m.vertices[v] - c.center).norm() - c.radius) < 1e-12);
    const Point mid = 0.5 * (m.vertices[b.vertices[0]] + m.vertices[b.vertices[1]]);
    CHECK(c.radius - (mid - c.center).norm() <= spec.h * spec.h / (8.0 * c.radius) + 1e-12);
  }
  // Interior edges are comparable to the adjacent diameters.
  const double c = shape_metrics(m).max_ratio;
  for (const auto& ie : e.interior)
    for (int t : {ie.plus, ie.minus}) {
      const double hk = triangle_diameter(m, t);
      CHECK(ie.length <= hk * (1 + 1e-12));
      CHECK(ie.length >= 2.0 / c * hk);
    }
}

TEST_CASE("one-cell and hole-free domains") {
  DomainSpec one;
  one.outer_radius = 7.5;
  one.cells = {Circle{{0, 0}, 1.0}};
  one.h = 0.6;
  CHECK(tags_of(generate_mesh(one)) == std::set<int>{kInteriorTag, kOuterTag, cell_tag(0)});

  DomainSpec rect;
  rect.outer = DomainSpec::Outer::Rectangle;
  rect.rect_min = {0, 0};
  rect.rect_max = {3, 2};
  rect.h = 0.4;
  const Mesh m = generate_mesh(rect);
  CHECK(tags_of(m) == std::set<int>{kInteriorTag, kOuterTag});
  CHECK(m.total_area() == doctest::Approx(6.0).epsilon(1e-12));
  for (const auto& b : build_edges(m).boundary) CHECK(b.tag == kOuterTag);
}

TEST_CASE("invalid domain specs are rejected") {
  DomainSpec s = two_cell_disk();
  s.cells[1].center = {-1.0, 0.0};
  CHECK_THROWS_AS(generate_mesh(s), InputError);

  s = two_cell_disk();
  s.h = 1.5;
  CHECK_THROWS_AS(generate_mesh(s), InputError);

  s = two_cell_disk();
  s.cells[0].center = {10.5, 0.0};
  CHECK_THROWS_AS(generate_mesh(s), InputError);
}

TEST_CASE("hanging vertex is a topology error") {
  Mesh m;
  m.vertices = {{0, 0}, {2, 0}, {0, 2}, {2, 2}, {1, 1}};
  m.triangles = {{0, 1, 2}, {1, 3, 4}, {4, 3, 2}};
  m.vertex_tags.assign(5, kOuterTag);
  CHECK_THROWS_AS(build_edges(m), TopologyError);
}

TEST_CASE("negative orientation is rejected") {
  Mesh m = single_triangle({0, 0}, {0, 1}, {1, 0});
  CHECK_THROWS_AS(m.check(), TopologyError);
}

TEST_CASE("uniform refinement") {
  const Mesh grid = structured_rectangle(3, 3, {0, 0}, {1, 1});
  const Mesh r = refine_uniform(grid);
  CHECK(r.num_triangles() == 4 * grid.num_triangles());
  CHECK(shape_metrics(r).max_h == doctest::Approx(shape_metrics(grid).max_h / 2).epsilon(1e-14));
  CHECK(shape_metrics(r).max_ratio == doctest::Approx(shape_metrics(grid).max_ratio).epsilon(1e-12));

  DomainSpec one;
  one.outer_radius = 7.5;
  one.cells = {Circle{{0, 0}, 1.0}};
  one.h = 0.6;
  const Mesh m0 = generate_mesh(one);
  const Mesh m2 = refine_uniform(refine_uniform(m0));
  CHECK(m2.num_triangles() == 16 * m0.num_triangles());
  const double h2 = shape_metrics(m2).max_h;
  CHECK(h2 <= 2.0 * one.h / 4.0);
  CHECK(h2 >= 0.5 * one.h / 4.0);
  // Boundary midpoints are projected onto the circles.
  for (const auto& b : build_edges(m2).boundary) {
    const Circle c = b.tag == kOuterTag ? Circle{{0, 0}, one.outer_radius} : one.cells[0];
    for (int v : b.vertices) CHECK(std::abs((m2.vertices[v] - c.center).norm() - c.radius) < 1e-12);
  }
  const double ratio = shape_metrics(refine_uniform(m0)).max_ratio / shape_metrics(m0).max_ratio;
  CHECK(ratio <= 1.05);
}

TEST_CASE("mesh file round trip") {
  const Mesh m = generate_mesh(two_cell_disk());
  std::stringstream io;
  write_mesh(m, io);
  const Mesh r = read_mesh(io);
  CHECK(r.vertices == m.vertices);
  CHECK(r.triangles == m.triangles);
  CHECK(r.vertex_tags == m.vertex_tags);

  std::istringstream bad("tethermesh 2\n0 0\n");
  CHECK_THROWS_AS(read_mesh(bad), InputError);
  std::istringstream truncated("tethermesh 1\n3 1\n0 0 1\n1 0 1\n");
  CHECK_THROWS_AS(read_mesh(truncated), InputError);
}

TEST_CASE("generation is deterministic for a fixed seed") {
  const Mesh a = generate_mesh(two_cell_disk());
  const Mesh b = generate_mesh(two_cell_disk());
  CHECK(a.vertices == b.vertices);
  CHECK(a.triangles == b.triangles);
}
