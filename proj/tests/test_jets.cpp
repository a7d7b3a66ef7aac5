#include "qcond/jets.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace qcond;

namespace {

std::shared_ptr<const Mesh> disk(double h) { return std::make_shared<const Mesh>(build_disk_mesh(1.0, h)); }

}  // namespace

TEST_CASE("barrier profiles") {
  const Barrier lb = log_barrier(0.3, Vec2(0.5, -1.0), 4.0);
  CHECK(lb.profile(0.0) == 0.0);
  CHECK(lb.profile_d1(0.0) == doctest::Approx(1.0));
  CHECK(lb.profile(1.0) == doctest::Approx(-4.0 * std::log(0.75)));
  CHECK(lb.profile_d2(1.0) == doctest::Approx(1.0 / (4.0 * 0.75 * 0.75)));
  CHECK(lb.value(Vec2(0, 0)) == doctest::Approx(0.3));
  CHECK((lb.gradient(Vec2(0, 0)) - Vec2(0.5, -1.0)).norm() < 1e-15);

  const Barrier eb = exp_barrier(0.0, Vec2(0.0, 3.0), 1.0);
  CHECK(eb.h == doctest::Approx(1.0));
  CHECK(eb.profile(1.0) == doctest::Approx(std::exp(1.0) - 1.0));
  CHECK((eb.gradient(Vec2(0.2, 0.0)) - Vec2(0.0, 3.0)).norm() < 1e-15);
  CHECK(eb.hessian(Vec2(0, 0))(1, 1) == doctest::Approx(3.0));
  CHECK(exp_barrier(0.0, Vec2(4.0, 3.0), 2.0).h == doctest::Approx(0.3));

  CHECK_THROWS_AS((void)exp_barrier(0.0, Vec2(1.0, 0.0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)exp_barrier(0.0, Vec2(1.0, 1.0), 0.0), std::invalid_argument);
}

TEST_CASE("hessian matches finite differences of the gradient") {
  for (const Barrier& b : {log_barrier(0.1, Vec2(0.4, 0.7), 4.0), exp_barrier(0.1, Vec2(0.4, -0.7), 0.5)}) {
    const Vec2 y(0.3, 0.6);
    const double e = 1e-6;
    for (int j = 0; j < 2; ++j) {
      Vec2 d = Vec2::Zero();
      d[j] = e;
      const Vec2 col = (b.gradient(y + d) - b.gradient(y - d)) / (2.0 * e);
      CHECK((col - b.hessian(y).col(j)).norm() < 1e-6);
    }
  }
}

TEST_CASE("barriers are one sided for the Laplacian") {
  const Mesh m = build_disk_mesh(1.0, 0.1);
  const auto cond = make_preset("constant(1)");
  for (double th : {0.0, 2.0, 4.0}) {
    const auto fr = boundary_frame_at(m, th);
    const Isometry iso = normalize_above_origin(m, fr);
    for (double pn : {-1.0, 0.5}) {
      const auto rl = verify_one_sided(cond, log_barrier(0.0, Vec2(0.3, pn), 4.0), m, iso);
      const auto re = verify_one_sided(cond, exp_barrier(0.0, Vec2(0.3, pn), 1.0), m, iso);
      CHECK(rl.evaluated == m.num_triangles());
      CHECK(rl.min_margin > 0.0);
      CHECK(re.min_margin > 0.0);
    }
  }
}

TEST_CASE("exp barrier: the step rule keeps the margin, a doubled step loses it") {
  const Mesh m = build_disk_mesh(1.0, 0.1);
  const auto cond = make_preset("saturating(0.5,1,0.3)");
  const auto rep = check_structural_conditions(cond, {-1, 1}, {0, 6}, 21);
  REQUIRE(rep.decay.passed());
  REQUIRE(rep.uniform.passed());
  const double C = *cond.decay_constant();
  double rule = 1e300, doubled = 1e300;
  for (double s : {-0.5, 0.5})
    for (double pt : {0.0, 1.0, 2.0})
      for (double pn : {-2.0, -1.0, -0.2, 0.5})
        for (double th : {0.0, 1.57}) {
          const auto iso = normalize_above_origin(m, boundary_frame_at(m, th));
          const Barrier b = exp_barrier(s, Vec2(pt, pn), C);
          rule = std::min(rule, verify_one_sided(cond, b, m, iso).min_margin);
          doubled = std::min(doubled, verify_one_sided(cond, exp_barrier_with_step(s, Vec2(pt, pn), 2.0 * b.h), m, iso).min_margin);
        }
  CHECK(rule >= 0.0);
  CHECK(doubled < 0.0);
}

TEST_CASE("log barrier fails far outside the small-gradient regime") {
  const Mesh m = build_disk_mesh(1.0, 0.1);
  const auto cond = make_preset("s_gaussian(0.25)");
  const auto iso = normalize_above_origin(m, boundary_frame_at(m, 0.0));
  const double A = 2.0 * m.diameter();
  const double pi = jet_radius(cond, 0.5, m.diameter()).pi;
  CHECK(verify_one_sided(cond, log_barrier(0.5, Vec2(0.5 * pi, 0.5 * pi), A), m, iso).valid());
  CHECK_FALSE(verify_one_sided(cond, log_barrier(0.5, Vec2(10.0, 0.5), A), m, iso).valid());
}

TEST_CASE("prescribe_jet attains requested jets") {
  const auto m = disk(0.05);
  for (const char* name : {"constant(1)", "gaussian_p(0.25)", "s_gaussian(0.25)"}) {
    ForwardSolver fs(make_preset(name), m);
    const double pi = jet_radius(fs.conductivity(), 0.5, m->diameter()).pi;
    for (double th : {0.0, 2.5}) {
      JetRequest req;
      req.frame = boundary_frame_at(*m, th);
      req.s = 0.5;
      req.p = 0.8 * pi * Vec2(std::cos(1.0), std::sin(1.0));
      const JetResult r = prescribe_jet(fs, req);
      CHECK_MESSAGE(r.ok, r.message);
      CHECK(r.jet_error <= r.tol_jet);
      CHECK(std::abs(r.achieved.s - 0.5) < 1e-12);
      CHECK(r.c2_surrogate <= r.pi1);
    }
  }
}

TEST_CASE("prescribe_jet with p = 0 returns constant data") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("s_gaussian(0.25)"), m);
  JetRequest req;
  req.frame = boundary_frame_at(*m, 1.0);
  req.s = -0.7;
  const JetResult r = prescribe_jet(fs, req);
  REQUIRE(r.ok);
  CHECK((r.f.array() + 0.7).abs().maxCoeff() < 1e-14);
  CHECK(r.jet_error < 1e-10);
}

TEST_CASE("prescribe_jet rejects |p| at or above Pi") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("constant(1)"), m);
  JetRequest req;
  req.frame = boundary_frame_at(*m, 0.0);
  req.p = Vec2(0.0, jet_radius(fs.conductivity(), 0.0, m->diameter()).pi);
  const JetResult r = prescribe_jet(fs, req);
  CHECK_FALSE(r.ok);
  CHECK(r.solves == 0);
}

TEST_CASE("normal slope is monotone in the family parameter") {
  const auto m = disk(0.1);
  ForwardSolver fs(make_preset("isotropic(0.2)"), m);
  const auto fr = boundary_frame_at(*m, 0.7);
  const double pi = jet_radius(fs.conductivity(), 0.0, m->diameter()).pi;
  double prev_t = -1e300;
  for (double q : {-0.8, -0.4, 0.0, 0.4, 0.8}) {
    JetRequest req;
    req.frame = fr;
    req.p = q * pi * (-fr.nu);
    const JetResult r = prescribe_jet(fs, req);
    REQUIRE(r.ok);
    CHECK(r.t > prev_t);
    CHECK(r.achieved_lo <= r.achieved_hi);
    prev_t = r.t;
  }
}

TEST_CASE("decay regime reaches gradients of size 5") {
  const auto m = disk(0.05);
  ForwardSolver fs(make_preset("saturating(0.5,0.1,0.1)"), m);
  JetOptions o;
  o.radius.regime = Regime::decay;
  for (double th : {0.0, 3.0}) {
    JetRequest req;
    req.frame = boundary_frame_at(*m, th);
    req.s = 0.5;
    req.regime = Regime::decay;
    req.p = 5.0 * req.frame.tau;
    const JetResult r = prescribe_jet(fs, req, o);
    CHECK_MESSAGE(r.ok, r.message);
    CHECK(std::isinf(r.radius.pi));
  }
}

TEST_CASE("jet batch reader") {
  std::istringstream ok("# header\n\njet 0.5 0.1 0.2 -0.3 small\njet 1 0 5 0 decay\n");
  const auto lines = read_jet_batch(ok);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].theta == 0.5);
  CHECK(lines[0].p.y() == -0.3);
  CHECK(lines[1].regime == Regime::decay);
  std::istringstream bad("jet 0 0 0 0 huge\n");
  CHECK_THROWS((void)read_jet_batch(bad));
  std::istringstream short_line("jet 0 0 0\n");
  CHECK_THROWS((void)read_jet_batch(short_line));
}

TEST_CASE("discrete C2 norm of a constant is its magnitude") {
  const Mesh m = build_disk_mesh(1.0, 0.1);
  CHECK(discrete_c2_norm(m, Vec::Constant(m.num_boundary(), -0.25)) == doctest::Approx(0.25));
}
