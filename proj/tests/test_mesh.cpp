#include "oracles.hpp"
#include "qcond/mesh.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace qcond;

TEST_CASE("disk mesh: positive areas, boundary on the circle, closed loop") {
  const Mesh m = build_disk_mesh(1.0, 0.1);
  for (int t = 0; t < m.num_triangles(); ++t) CHECK(m.area(t) > 0.0);
  CHECK(m.num_boundary() == static_cast<int>(m.boundary_edges().size()));
  for (int v : m.boundary_vertices()) CHECK(std::abs(m.vertices()[v].norm() - 1.0) < 1e-14);
  for (std::size_t k = 0; k < m.boundary_edges().size(); ++k) {
    const auto& e = m.boundary_edges()[k];
    CHECK(e.b == m.boundary_edges()[(k + 1) % m.boundary_edges().size()].a);
    const Vec2 mid = 0.5 * (m.vertices()[e.a] + m.vertices()[e.b]);
    CHECK(e.normal.dot(mid) > 0.0);
    CHECK(std::abs(e.normal.norm() - 1.0) < 1e-14);
  }
  double wsum = 0.0;
  for (int k = 0; k < m.num_boundary(); ++k) wsum += m.boundary_weight(k);
  CHECK(wsum == doctest::Approx(m.perimeter()));
  CHECK(m.diameter() == doctest::Approx(2.0));
}

TEST_CASE("disk area converges at second order") {
  std::vector<double> err;
  for (double h : {0.1, 0.05, 0.025}) err.push_back(std::abs(build_disk_mesh(1.0, h).total_area() - std::numbers::pi));
  CHECK(oracle::order(err[0], err[1], 0.1, 0.05) > 1.8);
  CHECK(oracle::order(err[1], err[2], 0.05, 0.025) > 1.8);
}

TEST_CASE("polygon mesh") {
  const Mesh m = build_polygon_mesh(6, 1.0, 0.1);
  const double exact = 1.5 * std::sqrt(3.0);
  CHECK(m.total_area() == doctest::Approx(exact).epsilon(1e-12));
  for (int t = 0; t < m.num_triangles(); ++t) CHECK(m.area(t) > 0.0);
  const MeshStats st = mesh_stats(m);
  CHECK(st.min_angle_deg > 15.0);
  CHECK(st.vertices == m.num_vertices());
  CHECK_THROWS((void)build_polygon_mesh(2, 1.0, 0.1));
}

TEST_CASE("P1 interpolation error at centroids is second order") {
  auto f = [](const Vec2& x) { return std::sin(2.0 * x.x()) * std::exp(x.y()); };
  const double e1 = oracle::centroid_interpolation_error(build_disk_mesh(1.0, 0.1), f);
  const double e2 = oracle::centroid_interpolation_error(build_disk_mesh(1.0, 0.05), f);
  CHECK(oracle::order(e1, e2, 0.1, 0.05) > 1.8);
}

TEST_CASE("normalize_above_origin examples") {
  const Mesh m = build_disk_mesh(1.0, 0.1);
  const BoundaryFrame east = boundary_frame_at(m, 0.0);
  CHECK((east.x0 - Vec2(1, 0)).norm() < 1e-14);
  const Isometry I = normalize_above_origin(m, east);
  CHECK(I.apply_inverse(Vec2(1, 0)).norm() < 1e-14);
  CHECK((I.apply_inverse(Vec2(0, 0)) - Vec2(0, 1)).norm() < 1e-14);
  CHECK((I.apply_inverse(Vec2(1, 0) - east.nu) - Vec2(0, 1)).norm() < 1e-14);
  CHECK(I.R.determinant() == doctest::Approx(1.0));

  const BoundaryFrame north = boundary_frame_at(m, std::numbers::pi / 2.0);
  const Isometry J = normalize_above_origin(m, north);
  CHECK((J.apply_inverse(Vec2(0, 0)) - Vec2(0, 1)).norm() < 1e-12);

  BoundaryFrame inside = east;
  inside.x0 = Vec2(0.5, 0.0);
  CHECK_THROWS_AS((void)normalize_above_origin(m, inside), std::invalid_argument);
}

TEST_CASE("frames: normalized domain lies above the tangent line") {
  for (const Mesh& m : {build_disk_mesh(1.0, 0.1), build_polygon_mesh(6, 1.0, 0.1)}) {
    for (int k = 0; k < m.num_boundary(); k += 3) {
      const BoundaryFrame f = boundary_frame_at_vertex(m, k);
      CHECK(std::abs(f.nu.dot(f.tau)) < 1e-14);
      CHECK(f.nu.x() * f.tau.y() - f.nu.y() * f.tau.x() == doctest::Approx(1.0));
      const Isometry I = normalize_above_origin(m, f);
      double lowest = 0.0;
      for (const Vec2& v : m.vertices()) lowest = std::min(lowest, I.apply_inverse(v).y());
      CHECK(lowest > -1e-12);
    }
  }
}

TEST_CASE("mesh text round trip") {
  const Mesh m = build_polygon_mesh(5, 1.0, 0.2);
  std::stringstream ss;
  write_mesh(ss, m);
  const Mesh r = read_mesh(ss);
  REQUIRE(r.num_vertices() == m.num_vertices());
  REQUIRE(r.num_triangles() == m.num_triangles());
  REQUIRE(r.num_boundary() == m.num_boundary());
  for (int v = 0; v < m.num_vertices(); ++v) CHECK((r.vertices()[v] - m.vertices()[v]).norm() == 0.0);
  CHECK(r.total_area() == doctest::Approx(m.total_area()));
  std::stringstream bad("v 0 0\nq 1 2\n");
  CHECK_THROWS((void)read_mesh(bad));
}
