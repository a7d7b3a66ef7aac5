#include "oracles.hpp"
#include "qcond/recovery.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace qcond;

namespace {

std::shared_ptr<const Mesh> disk(double h) { return std::make_shared<const Mesh>(build_disk_mesh(1.0, h)); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<double> dense_spectrum(double a, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  const Eigen::Index n = p.size();
  const Eigen::MatrixXd M = a * Eigen::MatrixXd::Identity(n, n) + 0.5 * (q * p.transpose() + p * q.transpose());
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

}  // namespace

TEST_CASE("oscillatory probe") {
  const auto m = disk(0.05);
  const auto fr = boundary_frame_at(*m, 0.4);
  const Probe p0 = oscillatory_probe(*m, fr, 1.0, 0.0, 0.5);
  CHECK((p0.re - p0.chi).norm() == 0.0);
  CHECK(p0.im.norm() == 0.0);
  CHECK(p0.chi[m->boundary_position(fr.vertex)] == 1.0);

  const double tmax = nyquist_limit(*m);
  int prev = m->num_boundary() + 1;
  for (double tau : {0.25 * tmax, 0.5 * tmax, tmax}) {
    const Probe p = oscillatory_probe(*m, fr, -1.0, tau, 3.0 / std::sqrt(tau));
    CHECK((p.re.array().square() + p.im.array().square() - p.chi.array().square()).abs().maxCoeff() < 1e-14);
    const int support = static_cast<int>((p.chi.array() > 0.0).count());
    CHECK(support < prev);
    prev = support;
  }
  CHECK_THROWS_AS((void)oscillatory_probe(*m, fr, 1.0, 1.01 * tmax, 0.5), std::invalid_argument);
  CHECK(bump(0.0, 1.0, 0.3) == 1.0);
  CHECK(bump(1.0, 1.0, 0.3) == 0.0);
}

TEST_CASE("default ladder stays below the Nyquist limit") {
  const auto m = disk(0.05);
  const SymbolOptions o;
  const auto ladder = default_tau_ladder(*m, o);
  CHECK(static_cast<int>(ladder.size()) == o.ladder_points);
  CHECK(ladder.back() <= nyquist_limit(*m, o.nodes_per_wavelength) * (1.0 + 1e-12));
  for (std::size_t k = 1; k < ladder.size(); ++k) CHECK(ladder[k] > ladder[k - 1]);
}

TEST_CASE("symbol of constant-coefficient operators against the half-space oracle") {
  const auto m = disk(0.05);
  Eigen::Matrix2d I = Eigen::Matrix2d::Identity(), D, N;
  D << 2.0, 0.0, 0.0, 0.5;
  N << 1.5, 0.3, -0.1, 1.0;
  for (const Eigen::Matrix2d& M : {I, D, N}) {
    const ConstantCoefficientDn dn(m, M);
    for (double th : {0.0, 1.3, 3.5}) {
      const auto fr = boundary_frame_at(*m, th);
      const SymbolEstimate est = extract_symbol(std::cref(dn), *m, fr, 0.0, Vec2::Zero());
      const std::complex<double> ref = oracle::half_space_symbol(M, fr.nu, fr.tau, 1.0);
      CHECK(est.reliable);
      CHECK(est.real_slope == doctest::Approx(ref.real()).epsilon(0.03));
      CHECK(std::abs(est.imag_slope - ref.imag()) < 0.03 * ref.real());
      CHECK(est.parity_residual < 1e-3);
    }
  }
}

TEST_CASE("measured invariants") {
  SymbolEstimate e;
  e.real_slope = 2.0;
  e.imag_slope = -0.5;
  const auto inv = measured_invariants(e);
  CHECK(inv.det_est == doctest::Approx(4.0));
  CHECK(inv.antisym_est == doctest::Approx(-0.5));
}

TEST_CASE("spectrum of the recovery matrix") {
  const auto s = spectrum_of_recovery_matrix(5.0, vec({2, 0, 0}), vec({1, 0, 0}));
  REQUIRE(s.size() == 3);
  CHECK(s[0] == doctest::Approx(5.0));
  CHECK(s[1] == doctest::Approx(5.0));
  CHECK(s[2] == doctest::Approx(7.0));

  for (double ev : spectrum_of_recovery_matrix(2.5, vec({0, 0, 0, 0}), vec({1, 2, 3, 4}))) CHECK(ev == 2.5);

  const auto o = spectrum_of_recovery_matrix(0.0, vec({0, 1, 0}), vec({1, 0, 0}));
  CHECK(o[0] == doctest::Approx(-0.5));
  CHECK(std::abs(o[1]) < 1e-15);
  CHECK(o[2] == doctest::Approx(0.5));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    const int n1 = 2 + k % 3;
    const Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(n1, [&] { return U(rng); });
    const Eigen::VectorXd q = Eigen::VectorXd::NullaryExpr(n1, [&] { return U(rng); });
    const double a = U(rng);
    const auto got = spectrum_of_recovery_matrix(a, q, p);
    const auto ref = dense_spectrum(a, q, p);
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("tangential matrix inversion") {
  Eigen::MatrixXd M = Eigen::Vector3d(7, 5, 5).asDiagonal();
  const auto r = recover_from_tangential_matrix(M, vec({1, 0, 0}));
  CHECK(r.a == doctest::Approx(5.0));
  CHECK((r.grad - vec({2, 0, 0})).norm() < 1e-12);
  CHECK(r.grad_recovered);

  const auto t = recover_from_tangential_matrix(3.0 * Eigen::MatrixXd::Identity(3, 3), vec({0.3, -1, 2}));
  CHECK(t.a == doctest::Approx(3.0));
  CHECK(t.grad.norm() < 1e-12);

  const auto z = recover_from_tangential_matrix(M, vec({0, 0, 0}));
  CHECK_FALSE(z.grad_recovered);
  CHECK(z.a == 7.0);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const int n1 = 2 + k % 3;
    const Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(n1, [&] { return U(rng); });
    const Eigen::VectorXd q = Eigen::VectorXd::NullaryExpr(n1, [&] { return U(rng); });
    const double a = 3.0 + U(rng);
    const Eigen::MatrixXd Mk = a * Eigen::MatrixXd::Identity(n1, n1) + 0.5 * (q * p.transpose() + p * q.transpose());
    const auto rk = recover_from_tangential_matrix(Mk, p);
    CHECK(std::abs(rk.a - a) < 1e-10);
    CHECK((rk.grad - q).norm() < 1e-10);
    CHECK(rk.reassembly_residual <= 1e-10);
  }
}

TEST_CASE("cumulative integral is exact on cubics") {
  const double dq = 0.1;
  std::vector<double> f;
  for (int k = 0; k <= 11; ++k) {
    const double x = k * dq;
    f.push_back(1.0 - 2.0 * x + 3.0 * x * x - x * x * x);
  }
  const auto F = cumulative_integral(f, dq);
  for (int k = 0; k <= 11; ++k) {
    const double x = k * dq;
    CHECK(std::abs(F[k] - (x - x * x + x * x * x - 0.25 * x * x * x * x)) < 1e-14);
  }
}

TEST_CASE("radial integration") {
  std::vector<double> r, D, ones;
  for (int k = 0; k <= 20; ++k) {
    const double p = k / 20.0;
    r.push_back(p);
    D.push_back((1.0 + p) * (1.0 + 2.0 * p));
    ones.push_back(4.0);
  }
  const auto prof = radial_integration_recovery(r, D);
  CHECK(prof.consistent);
  for (std::size_t k = 0; k < r.size(); ++k) CHECK(std::abs(prof.a_hat[k] - (1.0 + r[k])) < 1e-12);
  for (double a : radial_integration_recovery(r, ones).a_hat) CHECK(a == doctest::Approx(2.0));
  D[5] = -10.0;
  CHECK_FALSE(radial_integration_recovery(r, D).consistent);
}

TEST_CASE("reconstruct a = 1 on a coarse grid") {
  ForwardSolver fs(make_preset("constant(1)"), disk(0.05));
  ReconstructionOptions o;
  o.s_grid = {0.0};
  o.directions = 2;
  o.radii = 2;
  const RecoveryGrid g = reconstruct(fs, o);
  REQUIRE(g.pi_profile.size() == 1);
  CHECK(g.pi_profile[0].second > 0.0);
  REQUIRE(g.samples.size() >= 5);
  for (const auto& smp : g.samples) {
    CHECK(smp.status == "ok");
    CHECK(smp.p.norm() < g.pi_profile[0].second);
    REQUIRE(smp.rel_err.has_value());
    CHECK(*smp.rel_err < 0.03);
  }
  std::ostringstream os;
  write_recovery_csv(os, g);
  CHECK(os.str().rfind("s,p1,p2,a_hat,a_true,rel_err,status\n", 0) == 0);
}
