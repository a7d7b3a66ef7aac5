#pragma once

// 2D triangulations of the unit disk and regular polygons, boundary frames and
// the isometry that puts the domain above the origin at a boundary point.

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace qcond {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct BoundaryEdge {
  int a = 0;
  int b = 0;
  Vec2 normal = Vec2::Zero();  // outward, unit length
};

class Mesh {
 public:
  Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
       std::vector<BoundaryEdge> boundary_edges, double h, double diameter, Vec2 center);

  [[nodiscard]] const std::vector<Vec2>& vertices() const { return vertices_; }
  [[nodiscard]] const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  /// Single closed counter-clockwise loop: edge k runs boundary_vertices[k] -> [k+1].
  [[nodiscard]] const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  [[nodiscard]] const std::vector<int>& boundary_vertices() const { return boundary_vertices_; }
  [[nodiscard]] bool is_boundary(int v) const { return boundary_pos_[v] >= 0; }
  /// Position of a vertex in the boundary loop, or -1 for interior vertices.
  [[nodiscard]] int boundary_position(int v) const { return boundary_pos_[v]; }

  [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices_.size()); }
  [[nodiscard]] int num_triangles() const { return static_cast<int>(triangles_.size()); }
  [[nodiscard]] int num_boundary() const { return static_cast<int>(boundary_vertices_.size()); }

  [[nodiscard]] double h() const { return h_; }
  [[nodiscard]] double diameter() const { return diameter_; }
  [[nodiscard]] const Vec2& center() const { return center_; }

  [[nodiscard]] double area(int t) const { return areas_[t]; }
  /// Gradients of the three barycentric hat functions on triangle t (columns).
  [[nodiscard]] const Eigen::Matrix<double, 2, 3>& basis_gradients(int t) const { return grads_[t]; }
  [[nodiscard]] Vec2 centroid(int t) const;

  /// Lumped boundary mass: half the length of the two incident boundary edges.
  [[nodiscard]] double boundary_weight(int boundary_index) const { return bweights_[boundary_index]; }
  [[nodiscard]] double perimeter() const { return perimeter_; }
  [[nodiscard]] double total_area() const;

  /// Vertex neighbours (one ring).
  [[nodiscard]] const std::vector<std::vector<int>>& vertex_neighbors() const { return neighbors_; }

 private:
  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<int> boundary_vertices_;
  std::vector<int> boundary_pos_;
  std::vector<double> areas_;
  std::vector<Eigen::Matrix<double, 2, 3>> grads_;
  std::vector<double> bweights_;
  std::vector<std::vector<int>> neighbors_;
  double h_ = 0.0;
  double diameter_ = 0.0;
  double perimeter_ = 0.0;
  Vec2 center_ = Vec2::Zero();
};

/// Quasi-uniform ring triangulation of the disk of given radius centred at the
/// origin; ring k carries 6k vertices, boundary vertices lie exactly on the circle.
[[nodiscard]] Mesh build_disk_mesh(double radius, double h);

/// Regular polygon with `sides` corners on the circle of given radius.
[[nodiscard]] Mesh build_polygon_mesh(int sides, double radius, double h);

struct BoundaryFrame {
  Vec2 x0 = Vec2::Zero();
  Vec2 nu = Vec2::Zero();   // outward unit normal
  Vec2 tau = Vec2::Zero();  // nu rotated by +pi/2
  double theta = 0.0;
  int vertex = -1;          // mesh vertex at x0
};

/// Frame at the boundary vertex whose polar angle (about the mesh centre) is
/// closest to theta. The normal is the normalized mean of the two incident
/// edge normals.
[[nodiscard]] BoundaryFrame boundary_frame_at(const Mesh& mesh, double theta);
[[nodiscard]] BoundaryFrame boundary_frame_at_vertex(const Mesh& mesh, int boundary_index);

/// x = R y + t maps normalized coordinates y (domain above the origin) back to
/// the original coordinates.
struct Isometry {
  Mat2 R = Mat2::Identity();
  Vec2 t = Vec2::Zero();

  [[nodiscard]] Vec2 apply(const Vec2& y) const { return R * y + t; }
  [[nodiscard]] Vec2 apply_inverse(const Vec2& x) const { return R.transpose() * (x - t); }
  [[nodiscard]] Vec2 rotate(const Vec2& v) const { return R * v; }
  [[nodiscard]] Vec2 rotate_inverse(const Vec2& v) const { return R.transpose() * v; }
};

/// Isometry with I^{-1}(x0) = 0 and I^{-1}(-nu) = e2; throws if the frame is
/// not on the mesh boundary.
[[nodiscard]] Isometry normalize_above_origin(const Mesh& mesh, const BoundaryFrame& frame);

/// Plain-text format: `v x y`, `t i j k`, `b i j nx ny`.
void write_mesh(std::ostream& os, const Mesh& mesh);
[[nodiscard]] Mesh read_mesh(std::istream& is);

struct MeshStats {
  int vertices = 0;
  int triangles = 0;
  int boundary_vertices = 0;
  double min_area = 0.0;
  double max_area = 0.0;
  double total_area = 0.0;
  double min_angle_deg = 0.0;
  double max_angle_deg = 0.0;
  double h = 0.0;
  double diameter = 0.0;
};

[[nodiscard]] MeshStats mesh_stats(const Mesh& mesh);

}  // namespace qcond
