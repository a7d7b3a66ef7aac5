#include "qcond/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qcond {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double wrap_angle(double t) {
  t = std::fmod(t, 2.0 * M_PI);
  return t < 0.0 ? t + 2.0 * M_PI : t;
}

}  // namespace

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
           std::vector<BoundaryEdge> boundary_edges, double h, double diameter, Vec2 center)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      boundary_edges_(std::move(boundary_edges)),
      h_(h),
      diameter_(diameter),
      center_(std::move(center)) {
  const int nv = num_vertices();
  if (boundary_edges_.size() < 3) throw std::invalid_argument("mesh boundary needs at least 3 edges");

  boundary_pos_.assign(nv, -1);
  for (std::size_t k = 0; k < boundary_edges_.size(); ++k) {
    const auto& e = boundary_edges_[k];
    const auto& next = boundary_edges_[(k + 1) % boundary_edges_.size()];
    if (e.b != next.a) throw std::invalid_argument("boundary edges do not form a closed loop");
    if (boundary_pos_[e.a] >= 0) throw std::invalid_argument("boundary loop visits a vertex twice");
    boundary_pos_[e.a] = static_cast<int>(k);
    boundary_vertices_.push_back(e.a);
    if (std::abs(e.normal.norm() - 1.0) > 1e-12) throw std::invalid_argument("boundary normal not unit");
  }

  areas_.resize(triangles_.size());
  grads_.resize(triangles_.size());
  std::vector<char> used(nv, 0);
  neighbors_.assign(nv, {});
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    const Vec2& p0 = vertices_[tri[0]];
    const Vec2& p1 = vertices_[tri[1]];
    const Vec2& p2 = vertices_[tri[2]];
    const double det = cross(p1 - p0, p2 - p0);
    if (!(det > 0.0)) throw std::invalid_argument("triangle with non-positive signed area");
    areas_[t] = 0.5 * det;
    // grad lambda_i = rot(opposite edge) / (2 area)
    Eigen::Matrix<double, 2, 3> g;
    const Vec2 e0 = p2 - p1, e1 = p0 - p2, e2 = p1 - p0;
    g.col(0) = Vec2(e0.y(), -e0.x()) / det;
    g.col(1) = Vec2(e1.y(), -e1.x()) / det;
    g.col(2) = Vec2(e2.y(), -e2.x()) / det;
    grads_[t] = -g;
    for (int i = 0; i < 3; ++i) {
      used[tri[i]] = 1;
      for (int j = 0; j < 3; ++j)
        if (i != j) neighbors_[tri[i]].push_back(tri[j]);
    }
  }
  for (auto& nb : neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  if (std::find(used.begin(), used.end(), 0) != used.end())
    throw std::invalid_argument("mesh has vertices not used by any triangle");

  const int nb = num_boundary();
  bweights_.assign(nb, 0.0);
  perimeter_ = 0.0;
  for (int k = 0; k < nb; ++k) {
    const auto& e = boundary_edges_[k];
    const double len = (vertices_[e.b] - vertices_[e.a]).norm();
    perimeter_ += len;
    bweights_[k] += 0.5 * len;
    bweights_[(k + 1) % nb] += 0.5 * len;
  }
}

Vec2 Mesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (double x : areas_) a += x;
  return a;
}

namespace {

// Triangulates concentric rings; ring k (k >= 1) is given as points ordered by
// increasing polar angle starting near angle 0. Ring 0 is the centre.
Mesh build_ring_mesh(const std::vector<std::vector<Vec2>>& rings, double h, double diameter) {
  std::vector<Vec2> verts;
  std::vector<std::vector<int>> ids(rings.size());
  for (std::size_t k = 0; k < rings.size(); ++k)
    for (const auto& p : rings[k]) {
      ids[k].push_back(static_cast<int>(verts.size()));
      verts.push_back(p);
    }

  std::vector<std::array<int, 3>> tris;
  auto unwrap = [](const std::vector<Vec2>& ring) {
    std::vector<double> ang;
    for (const auto& p : ring) ang.push_back(wrap_angle(std::atan2(p.y(), p.x())));
    // first point sits at angle ~0; keep angles strictly increasing
    for (std::size_t i = 1; i < ang.size(); ++i)
      while (ang[i] <= ang[i - 1]) ang[i] += 2.0 * M_PI;
    if (ang[0] > M_PI) ang[0] -= 2.0 * M_PI;
    return ang;
  };

  for (std::size_t k = 1; k < rings.size(); ++k) {
    const auto& outer = ids[k];
    const auto outer_ang = unwrap(rings[k]);
    const int no = static_cast<int>(outer.size());
    if (k == 1) {
      for (int j = 0; j < no; ++j) tris.push_back({ids[0][0], outer[j], outer[(j + 1) % no]});
      continue;
    }
    const auto& inner = ids[k - 1];
    const auto inner_ang = unwrap(rings[k - 1]);
    const int ni = static_cast<int>(inner.size());
    auto ia = [&](int i) { return inner_ang[i % ni] + 2.0 * M_PI * (i / ni); };
    auto oa = [&](int j) { return outer_ang[j % no] + 2.0 * M_PI * (j / no); };
    int i = 0, j = 0;
    while (i < ni || j < no) {
      const bool advance_outer = (i >= ni) || (j < no && oa(j + 1) <= ia(i + 1));
      if (advance_outer) {
        tris.push_back({inner[i % ni], outer[j % no], outer[(j + 1) % no]});
        ++j;
      } else {
        tris.push_back({inner[i % ni], outer[j % no], inner[(i + 1) % ni]});
        ++i;
      }
    }
  }

  const auto& bring = ids.back();
  const int nb = static_cast<int>(bring.size());
  std::vector<BoundaryEdge> edges;
  for (int j = 0; j < nb; ++j) {
    BoundaryEdge e;
    e.a = bring[j];
    e.b = bring[(j + 1) % nb];
    const Vec2 d = verts[e.b] - verts[e.a];
    e.normal = Vec2(d.y(), -d.x()).normalized();
    edges.push_back(e);
  }
  return Mesh(std::move(verts), std::move(tris), std::move(edges), h, diameter, Vec2::Zero());
}

}  // namespace

Mesh build_disk_mesh(double radius, double h) {
  if (!(radius > 0.0) || !(h > 0.0) || !(h < radius))
    throw std::invalid_argument("disk mesh needs 0 < h < radius");
  const int nrings = static_cast<int>(std::ceil(radius / h - 1e-9));
  std::vector<std::vector<Vec2>> rings(nrings + 1);
  rings[0].push_back(Vec2::Zero());
  for (int k = 1; k <= nrings; ++k) {
    const double r = radius * k / nrings;
    const int n = 6 * k;
    for (int j = 0; j < n; ++j) {
      const double t = 2.0 * M_PI * j / n;
      rings[k].emplace_back(r * std::cos(t), r * std::sin(t));
    }
  }
  // exact circle placement for the boundary ring
  for (auto& p : rings.back()) p = radius * p.normalized();
  return build_ring_mesh(rings, h, 2.0 * radius);
}

Mesh build_polygon_mesh(int sides, double radius, double h) {
  if (sides < 3) throw std::invalid_argument("polygon needs at least 3 sides");
  if (!(radius > 0.0) || !(h > 0.0) || !(h < radius))
    throw std::invalid_argument("polygon mesh needs 0 < h < radius");
  const int nrings = static_cast<int>(std::ceil(radius / h - 1e-9));
  std::vector<Vec2> corners;
  for (int c = 0; c < sides; ++c) {
    const double t = 2.0 * M_PI * c / sides;
    corners.emplace_back(radius * std::cos(t), radius * std::sin(t));
  }
  std::vector<std::vector<Vec2>> rings(nrings + 1);
  rings[0].push_back(Vec2::Zero());
  for (int k = 1; k <= nrings; ++k) {
    const double scale = static_cast<double>(k) / nrings;
    for (int c = 0; c < sides; ++c) {
      const Vec2 a = scale * corners[c];
      const Vec2 b = scale * corners[(c + 1) % sides];
      for (int j = 0; j < k; ++j) rings[k].push_back(a + (b - a) * (static_cast<double>(j) / k));
    }
  }
  double diam = 0.0;
  for (const auto& a : corners)
    for (const auto& b : corners) diam = std::max(diam, (a - b).norm());
  return build_ring_mesh(rings, h, diam);
}

BoundaryFrame boundary_frame_at_vertex(const Mesh& mesh, int k) {
  const int nb = mesh.num_boundary();
  if (k < 0 || k >= nb) throw std::out_of_range("boundary index out of range");
  const auto& edges = mesh.boundary_edges();
  BoundaryFrame f;
  f.vertex = mesh.boundary_vertices()[k];
  f.x0 = mesh.vertices()[f.vertex];
  f.nu = (edges[k].normal + edges[(k + nb - 1) % nb].normal).normalized();
  f.tau = Vec2(-f.nu.y(), f.nu.x());
  const Vec2 rel = f.x0 - mesh.center();
  f.theta = wrap_angle(std::atan2(rel.y(), rel.x()));
  return f;
}

BoundaryFrame boundary_frame_at(const Mesh& mesh, double theta) {
  theta = wrap_angle(theta);
  int best = 0;
  double best_d = 1e300;
  for (int k = 0; k < mesh.num_boundary(); ++k) {
    const Vec2 rel = mesh.vertices()[mesh.boundary_vertices()[k]] - mesh.center();
    double d = std::abs(wrap_angle(std::atan2(rel.y(), rel.x())) - theta);
    d = std::min(d, 2.0 * M_PI - d);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return boundary_frame_at_vertex(mesh, best);
}

Isometry normalize_above_origin(const Mesh& mesh, const BoundaryFrame& frame) {
  const double tol = 1e-9 * std::max(1.0, mesh.diameter());
  bool on_boundary = false;
  for (const auto& e : mesh.boundary_edges()) {
    const Vec2 a = mesh.vertices()[e.a];
    const Vec2 b = mesh.vertices()[e.b];
    const Vec2 d = b - a;
    const double t = std::clamp((frame.x0 - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
    if ((a + t * d - frame.x0).norm() <= tol) {
      on_boundary = true;
      break;
    }
  }
  if (!on_boundary) throw std::invalid_argument("frame point is not on the mesh boundary");
  if (std::abs(frame.nu.norm() - 1.0) > 1e-10) throw std::invalid_argument("frame normal is not unit");

  Isometry iso;
  // columns: tangent -> e1, inner normal -> e2
  iso.R.col(0) = Vec2(-frame.nu.y(), frame.nu.x());
  iso.R.col(1) = -frame.nu;
  iso.t = frame.x0;
  return iso;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os.precision(17);
  for (const auto& v : mesh.vertices()) os << "v " << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : mesh.triangles()) os << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& e : mesh.boundary_edges())
    os << "b " << e.a << ' ' << e.b << ' ' << e.normal.x() << ' ' << e.normal.y() << '\n';
}

Mesh read_mesh(std::istream& is) {
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> tris;
  std::vector<BoundaryEdge> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    bool ok = true;
    if (tag == "v") {
      double x, y;
      ok = static_cast<bool>(ls >> x >> y);
      verts.emplace_back(x, y);
    } else if (tag == "t") {
      std::array<int, 3> t{};
      ok = static_cast<bool>(ls >> t[0] >> t[1] >> t[2]);
      tris.push_back(t);
    } else if (tag == "b") {
      BoundaryEdge e;
      double nx, ny;
      ok = static_cast<bool>(ls >> e.a >> e.b >> nx >> ny);
      e.normal = Vec2(nx, ny);
      edges.push_back(e);
    } else {
      ok = false;
    }
    if (!ok) throw std::runtime_error("mesh line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
  }
  const int nv = static_cast<int>(verts.size());
  for (const auto& t : tris)
    for (int i : t)
      if (i < 0 || i >= nv) throw std::runtime_error("mesh triangle references missing vertex");
  for (const auto& e : edges)
    if (e.a < 0 || e.a >= nv || e.b < 0 || e.b >= nv)
      throw std::runtime_error("mesh boundary edge references missing vertex");

  Vec2 center = Vec2::Zero();
  for (const auto& e : edges) center += verts[e.a];
  if (!edges.empty()) center /= static_cast<double>(edges.size());
  double diam = 0.0;
  for (const auto& a : edges)
    for (const auto& b : edges) diam = std::max(diam, (verts[a.a] - verts[b.a]).norm());
  double hmax = 0.0;
  for (const auto& t : tris)
    for (int i = 0; i < 3; ++i) hmax = std::max(hmax, (verts[t[i]] - verts[t[(i + 1) % 3]]).norm());
  return Mesh(std::move(verts), std::move(tris), std::move(edges), hmax, diam, center);
}

MeshStats mesh_stats(const Mesh& mesh) {
  MeshStats st;
  st.vertices = mesh.num_vertices();
  st.triangles = mesh.num_triangles();
  st.boundary_vertices = mesh.num_boundary();
  st.min_area = 1e300;
  st.min_angle_deg = 180.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    st.min_area = std::min(st.min_area, mesh.area(t));
    st.max_area = std::max(st.max_area, mesh.area(t));
    const auto& tri = mesh.triangles()[t];
    for (int i = 0; i < 3; ++i) {
      const Vec2 p = mesh.vertices()[tri[i]];
      const Vec2 a = mesh.vertices()[tri[(i + 1) % 3]] - p;
      const Vec2 b = mesh.vertices()[tri[(i + 2) % 3]] - p;
      const double ang = std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0)) * 180.0 / M_PI;
      st.min_angle_deg = std::min(st.min_angle_deg, ang);
      st.max_angle_deg = std::max(st.max_angle_deg, ang);
    }
  }
  st.total_area = mesh.total_area();
  st.h = mesh.h();
  st.diameter = mesh.diameter();
  return st;
}

}  // namespace qcond
