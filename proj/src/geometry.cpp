#include "tetherfem/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "tetherfem/errors.hpp"

namespace tetherfem {

namespace {

double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

double orient(const Point& a, const Point& b, const Point& c) { return cross(b - a, c - a); }

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

bool point_in_polygon(const Point& p, const std::vector<Point>& poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

double segment_distance(const Point& p, const Point& a, const Point& b) {
  const Point ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

struct Polyline {
  std::vector<Point> points;  // closed, no repeated endpoint
  int tag = kOuterTag;
};

Polyline circle_polyline(const Circle& c, double h, int tag) {
  const int n = std::max(6, static_cast<int>(std::ceil(2.0 * std::numbers::pi * c.radius / h)));
  Polyline poly;
  poly.tag = tag;
  poly.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n;
    poly.points.emplace_back(c.center + c.radius * Point(std::cos(theta), std::sin(theta)));
  }
  return poly;
}

Polyline rectangle_polyline(const Point& lo, const Point& hi, double h) {
  Polyline poly;
  poly.tag = kOuterTag;
  const std::array<Point, 4> corners = {lo, Point(hi.x(), lo.y()), hi, Point(lo.x(), hi.y())};
  for (int side = 0; side < 4; ++side) {
    const Point& a = corners[side];
    const Point& b = corners[(side + 1) % 4];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / h)));
    for (int i = 0; i < n; ++i) poly.points.emplace_back(a + (b - a) * (double(i) / n));
  }
  return poly;
}

// Bowyer-Watson with an edge -> triangle map for cavity growth. Points are inserted in the
// given order; the first bad triangle is found by scanning backwards from the newest.
class Delaunay {
 public:
  explicit Delaunay(const std::vector<Point>& pts) : pts_(pts) {
    Eigen::AlignedBox2d box;
    for (const auto& p : pts_) box.extend(p);
    const Point c = box.center();
    const double d = std::max(box.sizes().maxCoeff(), 1.0);
    n_real_ = static_cast<int>(pts_.size());
    pts_.emplace_back(c + Point(-20.0 * d, -10.0 * d));
    pts_.emplace_back(c + Point(20.0 * d, -10.0 * d));
    pts_.emplace_back(c + Point(0.0, 20.0 * d));
    add_triangle(n_real_, n_real_ + 1, n_real_ + 2);
  }

  void insert_all() {
    for (int i = 0; i < n_real_; ++i) insert(i);
  }

  std::vector<std::array<int, 3>> triangles() const {
    std::vector<std::array<int, 3>> out;
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      if (t.v[0] >= n_real_ || t.v[1] >= n_real_ || t.v[2] >= n_real_) continue;
      out.push_back(t.v);
    }
    return out;
  }

 private:
  struct Tri {
    std::array<int, 3> v;
    Point center;
    double r2;
    bool alive;
  };

  void add_triangle(int a, int b, int c) {
    const Point& A = pts_[a];
    const Point& B = pts_[b];
    const Point& C = pts_[c];
    const double d = 2.0 * orient(A, B, C);
    const double a2 = A.squaredNorm(), b2 = B.squaredNorm(), c2 = C.squaredNorm();
    const Point center((a2 * (B.y() - C.y()) + b2 * (C.y() - A.y()) + c2 * (A.y() - B.y())) / d,
                       (a2 * (C.x() - B.x()) + b2 * (A.x() - C.x()) + c2 * (B.x() - A.x())) / d);
    const int id = static_cast<int>(tris_.size());
    tris_.push_back({{a, b, c}, center, (A - center).squaredNorm(), true});
    edges_[edge_key(a, b)] = id;
    edges_[edge_key(b, c)] = id;
    edges_[edge_key(c, a)] = id;
  }

  bool in_circle(int t, const Point& p) const {
    return (p - tris_[t].center).squaredNorm() < tris_[t].r2 * (1.0 - 1e-12);
  }

  void insert(int pi) {
    const Point& p = pts_[pi];
    int seed = -1;
    for (int t = static_cast<int>(tris_.size()) - 1; t >= 0; --t) {
      if (tris_[t].alive && in_circle(t, p)) {
        seed = t;
        break;
      }
    }
    if (seed < 0) throw TopologyError("Delaunay insertion found no enclosing circumcircle");

    std::vector<int> bad{seed};
    std::vector<int> stack{seed};
    tris_[seed].alive = false;
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      for (int j = 0; j < 3; ++j) {
        const int a = tris_[t].v[j], b = tris_[t].v[(j + 1) % 3];
        auto it = edges_.find(edge_key(b, a));
        if (it == edges_.end()) continue;
        const int nb = it->second;
        if (tris_[nb].alive && in_circle(nb, p)) {
          tris_[nb].alive = false;
          bad.push_back(nb);
          stack.push_back(nb);
        }
      }
    }

    std::vector<std::array<int, 2>> rim;
    for (int t : bad) {
      for (int j = 0; j < 3; ++j) {
        const int a = tris_[t].v[j], b = tris_[t].v[(j + 1) % 3];
        auto it = edges_.find(edge_key(b, a));
        const bool shared = it != edges_.end() && !tris_[it->second].alive;
        if (!shared) rim.push_back({a, b});
      }
    }
    for (int t : bad) {
      for (int j = 0; j < 3; ++j) {
        const int a = tris_[t].v[j], b = tris_[t].v[(j + 1) % 3];
        auto it = edges_.find(edge_key(a, b));
        if (it != edges_.end() && it->second == t) edges_.erase(it);
      }
    }
    for (const auto& e : rim) {
      if (orient(pts_[e[0]], pts_[e[1]], p) <= 0.0)
        throw TopologyError("Delaunay cavity is not star-shaped (degenerate input)");
      add_triangle(e[0], e[1], pi);
    }
  }

  std::vector<Point> pts_;
  int n_real_ = 0;
  std::vector<Tri> tris_;
  std::unordered_map<std::uint64_t, int> edges_;
};

// Positive inside the matrix, negative inside cells or outside the outer boundary.
double domain_distance(const std::vector<Polyline>& lines, const Point& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& line : lines) {
    const std::size_t n = line.points.size();
    for (std::size_t i = 0; i < n; ++i)
      d = std::min(d, segment_distance(p, line.points[i], line.points[(i + 1) % n]));
  }
  const bool inside_outer = point_in_polygon(p, lines.front().points);
  bool inside_cell = false;
  for (std::size_t i = 1; i < lines.size(); ++i)
    inside_cell = inside_cell || point_in_polygon(p, lines[i].points);
  return (inside_outer && !inside_cell) ? d : -d;
}

}  // namespace

void DomainSpec::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw InputError("mesh size h must be positive");
  if (outer == Outer::Disk && !(outer_radius > 0.0))
    throw InputError("outer disk radius must be positive");
  if (outer == Outer::Rectangle &&
      !(rect_max.x() > rect_min.x() && rect_max.y() > rect_min.y()))
    throw InputError("rectangle extents must be increasing");
  double min_radius = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Circle& c = cells[i];
    if (!(c.radius > 0.0)) throw InputError("cell radius must be positive");
    min_radius = std::min(min_radius, c.radius);
    bool inside = false;
    if (outer == Outer::Disk) {
      inside = c.center.norm() + c.radius < outer_radius;
    } else {
      inside = c.center.x() - c.radius > rect_min.x() && c.center.x() + c.radius < rect_max.x() &&
               c.center.y() - c.radius > rect_min.y() && c.center.y() + c.radius < rect_max.y();
    }
    if (!inside) throw InputError("cell " + std::to_string(i) + " is not strictly inside the matrix");
    for (std::size_t j = 0; j < i; ++j) {
      if ((c.center - cells[j].center).norm() <= c.radius + cells[j].radius)
        throw InputError("cells " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
    }
  }
  if (h > min_radius) throw InputError("mesh size h exceeds the smallest cell radius");
}

double DomainSpec::nominal_area() const {
  double area = outer == Outer::Disk ? std::numbers::pi * outer_radius * outer_radius
                                     : (rect_max - rect_min).prod();
  for (const auto& c : cells) area -= std::numbers::pi * c.radius * c.radius;
  return area;
}

double Mesh::signed_area(int t) const {
  const auto& tri = triangles[t];
  return 0.5 * orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
}

double Mesh::total_area() const {
  double a = 0.0;
  for (int t = 0; t < num_triangles(); ++t) a += signed_area(t);
  return a;
}

Point Mesh::centroid(int t) const {
  const auto& tri = triangles[t];
  return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

void Mesh::check() const {
  if (vertex_tags.size() != vertices.size())
    throw TopologyError("vertex tag count does not match vertex count");
  for (int t = 0; t < num_triangles(); ++t) {
    for (int v : triangles[t])
      if (v < 0 || v >= num_vertices()) throw TopologyError("triangle references a missing vertex");
    if (!(signed_area(t) > 0.0))
      throw TopologyError("triangle " + std::to_string(t) + " has non-positive signed area");
  }
}

namespace {

// Laplacian smoothing of interior vertices; a move is rejected if it degrades any incident
// triangle below a quarter of its area.
void smooth_interior(Mesh& mesh, int sweeps) {
  std::vector<std::vector<int>> incident(mesh.vertices.size());
  std::vector<std::vector<int>> neighbors(mesh.vertices.size());
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int j = 0; j < 3; ++j) {
      const int v = mesh.triangles[t][j];
      incident[v].push_back(t);
      neighbors[v].push_back(mesh.triangles[t][(j + 1) % 3]);
      neighbors[v].push_back(mesh.triangles[t][(j + 2) % 3]);
    }
  for (auto& nb : neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      if (mesh.vertex_tags[v] != kInteriorTag) continue;
      Point avg = Point::Zero();
      for (int w : neighbors[v]) avg += mesh.vertices[w];
      avg /= static_cast<double>(neighbors[v].size());
      const Point old = mesh.vertices[v];
      std::vector<double> before;
      for (int t : incident[v]) before.push_back(mesh.signed_area(t));
      mesh.vertices[v] = avg;
      bool ok = true;
      for (std::size_t k = 0; k < incident[v].size() && ok; ++k)
        ok = mesh.signed_area(incident[v][k]) > 0.25 * before[k];
      if (!ok) mesh.vertices[v] = old;
    }
  }

}

}  // namespace

Mesh generate_mesh(const DomainSpec& spec) {
  spec.validate();
  const double h = spec.h;

  std::vector<Polyline> lines;
  if (spec.outer == DomainSpec::Outer::Disk)
    lines.push_back(circle_polyline(Circle{{0.0, 0.0}, spec.outer_radius}, h, kOuterTag));
  else
    lines.push_back(rectangle_polyline(spec.rect_min, spec.rect_max, h));
  for (std::size_t i = 0; i < spec.cells.size(); ++i)
    lines.push_back(circle_polyline(spec.cells[i], h, cell_tag(static_cast<int>(i))));

  std::vector<Point> pts;
  std::vector<int> tags;
  for (const auto& line : lines) {
    for (const auto& p : line.points) {
      pts.push_back(p);
      tags.push_back(line.tag);
    }
  }

  // Hexagonal lattice fill, kept away from the boundary polylines.
  Eigen::AlignedBox2d box;
  for (const auto& p : lines.front().points) box.extend(p);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-1e-3 * h, 1e-3 * h);
  const double dy = h * std::sqrt(3.0) / 2.0;
  const int rows = static_cast<int>(std::ceil(box.sizes().y() / dy)) + 1;
  const int cols = static_cast<int>(std::ceil(box.sizes().x() / h)) + 2;
  for (int r = 0; r < rows; ++r) {
    const double y = box.min().y() + r * dy;
    const double x0 = box.min().x() + ((r % 2) ? 0.5 * h : 0.0);
    for (int c = 0; c < cols; ++c) {
      Point p(x0 + c * h + jitter(rng), y + jitter(rng));
      if (domain_distance(lines, p) >= 0.55 * h) {
        pts.push_back(p);
        tags.push_back(kInteriorTag);
      }
    }
  }

  // Insert in row-major bands so the backwards triangle scan stays local.
  std::vector<int> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const long ra = std::lround(std::floor((pts[a].y() - box.min().y()) / h));
    const long rb = std::lround(std::floor((pts[b].y() - box.min().y()) / h));
    if (ra != rb) return ra < rb;
    return (ra % 2 == 0) ? pts[a].x() < pts[b].x() : pts[a].x() > pts[b].x();
  });
  std::vector<Point> sorted(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = pts[order[i]];
  Delaunay dt(sorted);
  dt.insert_all();

  std::vector<std::array<int, 3>> kept;
  for (auto tri : dt.triangles()) {
    for (int& v : tri) v = order[v];
    const Point c = (pts[tri[0]] + pts[tri[1]] + pts[tri[2]]) / 3.0;
    bool inside = point_in_polygon(c, lines.front().points);
    for (std::size_t i = 1; i < lines.size() && inside; ++i)
      inside = !point_in_polygon(c, lines[i].points);
    if (inside) kept.push_back(tri);
  }

  // Every polyline segment must be recovered as a mesh edge, and nothing else may be a boundary.
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& tri : kept)
    for (int j = 0; j < 3; ++j) {
      const auto [a, b] = local_edge_vertices(j);
      const int u = tri[a], v = tri[b];
      ++edge_count[{std::min(u, v), std::max(u, v)}];
    }
  int offset = 0;
  std::size_t n_segments = 0;
  for (const auto& line : lines) {
    const int n = static_cast<int>(line.points.size());
    for (int i = 0; i < n; ++i) {
      const int u = offset + i, v = offset + (i + 1) % n;
      auto it = edge_count.find({std::min(u, v), std::max(u, v)});
      if (it == edge_count.end() || it->second != 1)
        throw TopologyError("mesh generation failed to recover a boundary segment; reduce h");
    }
    offset += n;
    n_segments += n;
  }
  std::size_t n_open = 0;
  for (const auto& [e, count] : edge_count) n_open += (count == 1);
  if (n_open != n_segments) throw TopologyError("mesh generation produced a spurious boundary");

  // Compact vertices.
  std::vector<int> remap(pts.size(), -1);
  Mesh mesh;
  for (auto& tri : kept)
    for (int& v : tri) {
      if (remap[v] < 0) {
        remap[v] = mesh.num_vertices();
        mesh.vertices.push_back(pts[v]);
        mesh.vertex_tags.push_back(tags[v]);
      }
      v = remap[v];
    }
  // Deterministic vertex order: by original index.
  {
    std::vector<std::pair<int, int>> by_original;
    for (std::size_t i = 0; i < remap.size(); ++i)
      if (remap[i] >= 0) by_original.emplace_back(static_cast<int>(i), remap[i]);
    std::vector<int> final_index(mesh.vertices.size());
    std::vector<Point> verts(mesh.vertices.size());
    std::vector<int> vtags(mesh.vertices.size());
    for (std::size_t k = 0; k < by_original.size(); ++k) {
      final_index[by_original[k].second] = static_cast<int>(k);
      verts[k] = pts[by_original[k].first];
      vtags[k] = tags[by_original[k].first];
    }
    for (auto& tri : kept)
      for (int& v : tri) v = final_index[v];
    mesh.vertices = std::move(verts);
    mesh.vertex_tags = std::move(vtags);
  }
  mesh.triangles = std::move(kept);
  std::sort(mesh.triangles.begin(), mesh.triangles.end(), [&](const auto& a, const auto& b) {
    const Point ca = (mesh.vertices[a[0]] + mesh.vertices[a[1]] + mesh.vertices[a[2]]) / 3.0;
    const Point cb = (mesh.vertices[b[0]] + mesh.vertices[b[1]] + mesh.vertices[b[2]]) / 3.0;
    if (ca.y() != cb.y()) return ca.y() < cb.y();
    return ca.x() < cb.x();
  });

  smooth_interior(mesh, 8);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (mesh.curves.size() <= static_cast<std::size_t>(lines[i].tag))
      mesh.curves.resize(lines[i].tag + 1);
    if (i == 0 && spec.outer == DomainSpec::Outer::Disk)
      mesh.curves[kOuterTag] = Circle{{0.0, 0.0}, spec.outer_radius};
    else if (i > 0)
      mesh.curves[lines[i].tag] = spec.cells[i - 1];
  }
  mesh.check();
  return mesh;
}

Mesh structured_rectangle(int nx, int ny, Point lo, Point hi) {
  if (nx < 1 || ny < 1) throw InputError("structured grid needs at least one cell per direction");
  Mesh mesh;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      mesh.vertices.emplace_back(lo.x() + (hi.x() - lo.x()) * i / nx,
                                 lo.y() + (hi.y() - lo.y()) * j / ny);
      const bool edge = i == 0 || j == 0 || i == nx || j == ny;
      mesh.vertex_tags.push_back(edge ? kOuterTag : kInteriorTag);
    }
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  mesh.check();
  return mesh;
}

EdgeSet build_edges(const Mesh& mesh) {
  struct Slot {
    int tri;
    int local;
  };
  std::map<std::pair<int, int>, std::vector<Slot>> edges;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int j = 0; j < 3; ++j) {
      const auto [a, b] = local_edge_vertices(j);
      const int u = mesh.triangles[t][a], v = mesh.triangles[t][b];
      edges[{std::min(u, v), std::max(u, v)}].push_back({t, j});
    }

  EdgeSet set;
  set.element_edges.assign(mesh.triangles.size(), {0, 0, 0});
  auto outward = [&](int t, int j) {
    const auto [a, b] = local_edge_vertices(j);
    const Point tangent = mesh.vertices[mesh.triangles[t][b]] - mesh.vertices[mesh.triangles[t][a]];
    return Point(tangent.y(), -tangent.x()).normalized();
  };
  for (const auto& [key, slots] : edges) {
    const double length = (mesh.vertices[key.first] - mesh.vertices[key.second]).norm();
    if (slots.size() > 2) throw TopologyError("edge shared by more than two triangles");
    if (slots.size() == 2) {
      const Slot& p = slots[0].tri < slots[1].tri ? slots[0] : slots[1];
      const Slot& m = slots[0].tri < slots[1].tri ? slots[1] : slots[0];
      if (p.tri == m.tri) throw TopologyError("triangle with a repeated edge");
      InteriorEdge e;
      e.vertices = {key.first, key.second};
      e.plus = p.tri;
      e.minus = m.tri;
      e.local_plus = p.local;
      e.local_minus = m.local;
      e.normal = outward(p.tri, p.local);
      e.length = length;
      set.element_edges[p.tri][p.local] = static_cast<int>(set.interior.size());
      set.element_edges[m.tri][m.local] = static_cast<int>(set.interior.size());
      set.interior.push_back(e);
    } else {
      const Slot& s = slots[0];
      BoundaryEdge e;
      e.vertices = {key.first, key.second};
      e.element = s.tri;
      e.local = s.local;
      e.normal = outward(s.tri, s.local);
      e.length = length;
      const int ta = mesh.vertex_tags.empty() ? kInteriorTag : mesh.vertex_tags[key.first];
      const int tb = mesh.vertex_tags.empty() ? kInteriorTag : mesh.vertex_tags[key.second];
      e.tag = (ta == tb || ta == kInteriorTag || tb == kInteriorTag) ? std::min(ta, tb) : ta;
      if (ta == tb) e.tag = ta;
      set.element_edges[s.tri][s.local] = -(1 + static_cast<int>(set.boundary.size()));
      set.boundary.push_back(e);
    }
  }

  // A hanging vertex shows up as a boundary vertex lying inside another boundary edge.
  std::vector<int> boundary_vertices;
  for (const auto& e : set.boundary) {
    boundary_vertices.push_back(e.vertices[0]);
    boundary_vertices.push_back(e.vertices[1]);
  }
  std::sort(boundary_vertices.begin(), boundary_vertices.end());
  boundary_vertices.erase(std::unique(boundary_vertices.begin(), boundary_vertices.end()),
                          boundary_vertices.end());
  for (const auto& e : set.boundary) {
    const Point& a = mesh.vertices[e.vertices[0]];
    const Point& b = mesh.vertices[e.vertices[1]];
    for (int v : boundary_vertices) {
      if (v == e.vertices[0] || v == e.vertices[1]) continue;
      const Point& p = mesh.vertices[v];
      const double t = (p - a).dot(b - a) / (b - a).squaredNorm();
      if (t > 1e-9 && t < 1 - 1e-9 && std::abs(orient(a, b, p)) < 1e-12 * (b - a).squaredNorm())
        throw TopologyError("hanging vertex " + std::to_string(v) + " on edge (" +
                            std::to_string(e.vertices[0]) + ", " + std::to_string(e.vertices[1]) +
                            ")");
    }
  }
  return set;
}

Mesh refine_uniform(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& tri : mesh.triangles)
    for (int j = 0; j < 3; ++j) {
      const auto [a, b] = local_edge_vertices(j);
      ++count[{std::min(tri[a], tri[b]), std::max(tri[a], tri[b])}];
    }

  Mesh out;
  out.vertices = mesh.vertices;
  out.vertex_tags = mesh.vertex_tags;
  out.curves = mesh.curves;
  std::map<std::pair<int, int>, int> midpoint;
  for (const auto& [key, n] : count) {
    Point m = 0.5 * (mesh.vertices[key.first] + mesh.vertices[key.second]);
    int tag = kInteriorTag;
    const int ta = mesh.vertex_tags[key.first], tb = mesh.vertex_tags[key.second];
    if (n == 1 && ta == tb && ta != kInteriorTag) {
      tag = ta;
      if (static_cast<std::size_t>(tag) < mesh.curves.size() && mesh.curves[tag]) {
        const Circle& c = *mesh.curves[tag];
        m = c.center + c.radius * (m - c.center).normalized();
      }
    } else if (n == 1) {
      tag = ta != kInteriorTag ? ta : tb;
    }
    midpoint[key] = out.num_vertices();
    out.vertices.push_back(m);
    out.vertex_tags.push_back(tag);
  }
  auto mid = [&](int a, int b) { return midpoint.at({std::min(a, b), std::max(a, b)}); };
  out.triangles.reserve(4 * mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const int m01 = mid(t[0], t[1]), m12 = mid(t[1], t[2]), m20 = mid(t[2], t[0]);
    out.triangles.push_back({t[0], m01, m20});
    out.triangles.push_back({m01, t[1], m12});
    out.triangles.push_back({m20, m12, t[2]});
    out.triangles.push_back({m01, m12, m20});
  }
  out.check();
  return out;
}

double triangle_diameter(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point& a = mesh.vertices[tri[0]];
  const Point& b = mesh.vertices[tri[1]];
  const Point& c = mesh.vertices[tri[2]];
  return std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
}

double triangle_inradius(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point& a = mesh.vertices[tri[0]];
  const Point& b = mesh.vertices[tri[1]];
  const Point& c = mesh.vertices[tri[2]];
  const double perimeter = (a - b).norm() + (b - c).norm() + (c - a).norm();
  return 2.0 * std::abs(mesh.signed_area(t)) / perimeter;
}

ShapeMetrics shape_metrics(const Mesh& mesh) {
  ShapeMetrics m;
  m.min_angle = std::numbers::pi;
  m.min_h = std::numeric_limits<double>::infinity();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double h = triangle_diameter(mesh, t);
    m.max_h = std::max(m.max_h, h);
    m.min_h = std::min(m.min_h, h);
    m.max_ratio = std::max(m.max_ratio, h / triangle_inradius(mesh, t));
    const auto& tri = mesh.triangles[t];
    for (int j = 0; j < 3; ++j) {
      const Point u = mesh.vertices[tri[(j + 1) % 3]] - mesh.vertices[tri[j]];
      const Point v = mesh.vertices[tri[(j + 2) % 3]] - mesh.vertices[tri[j]];
      m.min_angle = std::min(m.min_angle, std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
    }
  }
  return m;
}

void write_mesh(const Mesh& mesh, std::ostream& out) {
  out << "tethermesh 1\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
  out << std::setprecision(17);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    out << mesh.vertices[v].x() << ' ' << mesh.vertices[v].y() << ' ' << mesh.vertex_tags[v] << '\n';
  for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_mesh(mesh, out);
}

Mesh read_mesh(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "tethermesh" || version != 1)
    throw InputError("not a tethermesh version 1 file");
  int nv = 0, nt = 0;
  if (!(in >> nv >> nt) || nv < 0 || nt < 0) throw InputError("bad mesh header counts");
  Mesh mesh;
  mesh.vertices.resize(nv);
  mesh.vertex_tags.resize(nv);
  for (int v = 0; v < nv; ++v) {
    double x, y;
    int tag;
    if (!(in >> x >> y >> tag)) throw InputError("truncated vertex list");
    mesh.vertices[v] = Point(x, y);
    mesh.vertex_tags[v] = tag;
  }
  mesh.triangles.resize(nt);
  for (int t = 0; t < nt; ++t) {
    auto& tri = mesh.triangles[t];
    if (!(in >> tri[0] >> tri[1] >> tri[2])) throw InputError("truncated triangle list");
  }
  mesh.check();
  return mesh;
}

Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_mesh(in);
}

}  // namespace tetherfem
