#include "qcond/linearization.hpp"

#include <doctest.h>

#include <cmath>

using namespace qcond;

namespace {

std::shared_ptr<const Mesh> disk(double h) { return std::make_shared<const Mesh>(build_disk_mesh(1.0, h)); }

PointFunction base_data() {
  return [](const Vec2& x) { return 0.5 * (x.x() + 0.5 * x.x() * x.y()); };
}

Vec cos3(const Mesh& m) {
  return sample_boundary(m, [](const Vec2& x) { return std::cos(3.0 * std::atan2(x.y(), x.x())); });
}

double max_diff(const SpMat& a, const SpMat& b) {
  const SpMat d = a - b;
  double e = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SpMat::InnerIterator it(d, k); it; ++it) e = std::max(e, std::abs(it.value()));
  return e;
}

}  // namespace

TEST_CASE("a = 1: the linearized operator is the Laplacian") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("constant(1)"), m);
  const auto base = fs.solve(sample_boundary(*m, base_data()));
  const LinearizedOperator op(fs, base);
  REQUIRE(op.ok());
  const Vec h = cos3(*m);
  CHECK((op.solve(h) - fs.harmonic_extension(h)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(op.solve(Vec::Zero(m->num_boundary())).cwiseAbs().maxCoeff() == 0.0);

  std::vector<double> err;
  for (double hh : {0.1, 0.05}) {
    const auto mm = disk(hh);
    ForwardSolver f2(make_preset("constant(1)"), mm);
    const LinearizedOperator o2(f2, f2.solve(Vec::Zero(mm->num_boundary())));
    const FluxDensity fl = o2.dn(sample_boundary(*mm, [](const Vec2& x) { return x.x(); }));
    double e = 0.0;
    for (int k = 0; k < mm->num_boundary(); ++k)
      e = std::max(e, std::abs(fl.nodal[k] - mm->vertices()[mm->boundary_vertices()[k]].x()));
    err.push_back(e);
  }
  CHECK(err[1] < err[0] / 3.0);
}

TEST_CASE("constant base: the first-order term vanishes") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("s_square()"), m);
  const auto base = fs.solve(Vec::Constant(m->num_boundary(), 0.8));
  const LinearizedOperator op(fs, base);
  REQUIRE(op.ok());
  const Vec h = cos3(*m);
  CHECK((op.solve(h) - fs.harmonic_extension(h)).cwiseAbs().maxCoeff() < 1e-12);
  // flux scales with a(0.8) = 1.64
  const FluxDensity lap = LinearizedOperator(ForwardSolver(make_preset("constant(1)"), m), base).dn(h);
  CHECK((op.dn(h).nodal - 1.64 * lap.nodal).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stiffness symmetry") {
  const auto m = disk(0.1);
  for (const char* name : {"gaussian_p(0.25)", "isotropic(0.2)"}) {
    ForwardSolver fs(make_preset(name), m);
    const auto base = fs.solve(sample_boundary(*m, base_data()));
    const LinearizedOperator op(fs, base);
    const SpMat t = op.stiffness().II.transpose();
    CHECK(max_diff(op.stiffness().II, t) < 1e-12);
  }
  ForwardSolver fs(make_preset("s_gaussian(0.25)"), m);
  const LinearizedOperator op(fs, fs.solve(sample_boundary(*m, base_data())));
  const SpMat t = op.stiffness().II.transpose();
  CHECK(max_diff(op.stiffness().II, t) > 1e-6);
}

TEST_CASE("Jacobian equals the independently assembled linearized stiffness") {
  const auto m = disk(0.1);
  for (const char* name : {"s_gaussian(0.25)", "gaussian_p(0.25)", "saturating(0.5,0.1,0.1)", "affine_p1(0.3)"}) {
    ForwardSolver fs(make_preset(name), m);
    const auto base = fs.solve(sample_boundary(*m, base_data()));
    REQUIRE(base.converged);
    const BlockSystem J = fs.jacobian(base.u);
    const BlockSystem K = linearized_stiffness(fs.conductivity(), fs.pattern(), base.u);
    CHECK(max_diff(J.II, K.II) < 1e-12);
    CHECK(max_diff(J.IB, K.IB) < 1e-12);
    CHECK(max_diff(J.BI, K.BI) < 1e-12);
    CHECK(max_diff(J.BB, K.BB) < 1e-12);
  }
}

TEST_CASE("finite-difference check decreases one decade per decade") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("s_gaussian(0.25)"), m);
  const auto rows = fd_derivative_check(fs, sample_boundary(*m, base_data()), cos3(*m), {1e-1, 1e-2, 1e-3});
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.converged);
  for (int k = 0; k < 2; ++k) {
    const double ratio = rows[k].error / rows[k + 1].error;
    CHECK(ratio >= 8.0);
    CHECK(ratio <= 12.0);
  }
}

TEST_CASE("linearized flux is conservative") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("s_gaussian(0.25)"), m);
  const auto base = fs.solve(sample_boundary(*m, base_data()));
  const auto lin = solve_linearized(fs, base, cos3(*m));
  REQUIRE(lin.ok);
  CHECK(std::abs(linearized_dn(lin).total(*m)) < 1e-10);
  CHECK(lin.condition > 1.0);
}

TEST_CASE("condition threshold rejects the operator") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("constant(1)"), m);
  const auto base = fs.solve(Vec::Zero(m->num_boundary()));
  const LinearizedOperator op(fs, base, 2.0);
  CHECK_FALSE(op.ok());
  CHECK_FALSE(op.message().empty());
  CHECK_FALSE(solve_linearized(fs, base, cos3(*m), 2.0).ok);
}
