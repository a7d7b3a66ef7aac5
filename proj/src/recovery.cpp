#include "qcond/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace qcond {

DnEvaluator make_dn_evaluator(const LinearizedOperator& op) {
  return [&op](const Vec& h) {
    const FluxDensity fd = op.dn(h);
    const Mesh& m = op.pattern().mesh();
    Vec r(fd.nodal.size());
    for (int k = 0; k < m.num_boundary(); ++k) r[k] = fd.nodal[k] * m.boundary_weight(k);
    return r;
  };
}

ConstantCoefficientDn::ConstantCoefficientDn(std::shared_ptr<const Mesh> mesh, const Mat2& M)
    : pattern_(std::move(mesh)) {
  const Mesh& m = pattern_.mesh();
  K_ = pattern_.make_system();
  pattern_.assemble(K_, [&](int t, Eigen::Matrix3d& K) {
    const auto& g = m.basis_gradients(t);
    K = m.area(t) * (g.transpose() * M * g);
  });
  lu_.analyze(K_.II);
  if (!lu_.factorize(K_.II)) throw std::runtime_error("constant-coefficient stiffness is singular");
}

Vec ConstantCoefficientDn::operator()(const Vec& h) const {
  const Vec vi = lu_.solve(-(K_.IB * h));
  return K_.BI * vi + K_.BB * h;
}

double nyquist_limit(const Mesh& mesh, double nodes_per_wavelength) {
  double spacing = 0.0;
  const auto& bv = mesh.boundary_vertices();
  for (int k = 0; k < mesh.num_boundary(); ++k)
    spacing = std::max(spacing, (mesh.vertices()[bv[(k + 1) % mesh.num_boundary()]] -
                                 mesh.vertices()[bv[k]]).norm());
  return 2.0 * std::numbers::pi / (nodes_per_wavelength * spacing);
}

double bump(double l, double width, double plateau) {
  const double a = std::abs(l);
  const double inner = plateau * width;
  if (a <= inner) return 1.0;
  if (a >= width) return 0.0;
  const double t = (a - inner) / (width - inner);
  const double e0 = std::exp(-1.0 / (1.0 - t));
  const double e1 = std::exp(-1.0 / t);
  return e0 / (e0 + e1);
}

namespace {

/// Signed arclength from boundary position k0 to every boundary vertex
/// (shortest way round).
std::vector<double> signed_arclength(const Mesh& mesh, int k0) {
  const int nb = mesh.num_boundary();
  const auto& bv = mesh.boundary_vertices();
  std::vector<double> fwd(nb, 0.0);
  for (int j = 1; j < nb; ++j) {
    const int a = (k0 + j - 1) % nb, b = (k0 + j) % nb;
    fwd[b] = fwd[a] + (mesh.vertices()[bv[b]] - mesh.vertices()[bv[a]]).norm();
  }
  const double per = mesh.perimeter();
  std::vector<double> out(nb);
  for (int k = 0; k < nb; ++k) out[k] = fwd[k] <= 0.5 * per ? fwd[k] : fwd[k] - per;
  return out;
}

}  // namespace

Probe oscillatory_probe(const Mesh& mesh, const BoundaryFrame& frame, double xi_sign, double tau,
                        double width, double plateau, double nodes_per_wavelength) {
  if (tau < 0.0) throw std::invalid_argument("probe frequency must be non-negative");
  if (tau > nyquist_limit(mesh, nodes_per_wavelength) * (1.0 + 1e-12))
    throw std::invalid_argument("probe frequency above the mesh Nyquist limit");
  const int k0 = mesh.boundary_position(frame.vertex);
  if (k0 < 0) throw std::invalid_argument("probe frame is not at a boundary vertex");
  const int nb = mesh.num_boundary();
  const auto arc = signed_arclength(mesh, k0);
  const Vec2 xi = (xi_sign >= 0.0 ? 1.0 : -1.0) * frame.tau;
  Probe pr;
  pr.tau = tau;
  pr.width = width;
  pr.chi.resize(nb);
  pr.re.resize(nb);
  pr.im.resize(nb);
  for (int k = 0; k < nb; ++k) {
    const Vec2 x = mesh.vertices()[mesh.boundary_vertices()[k]];
    const double c = bump(arc[k], width, plateau);
    const double ph = tau * xi.dot(x - frame.x0);
    pr.chi[k] = c;
    pr.re[k] = c * std::cos(ph);
    pr.im[k] = c * std::sin(ph);
  }
  return pr;
}

Complex probe_pairing(const DnEvaluator& dn, const Mesh& mesh, const Probe& probe) {
  const Vec rr = dn(probe.re);
  const Vec ri = dn(probe.im);
  Complex num = 0.0;
  double den = 0.0;
  for (int k = 0; k < mesh.num_boundary(); ++k) {
    const Complex r(rr[k], ri[k]);
    const Complex h(probe.re[k], probe.im[k]);
    num += r * std::conj(h);
    den += mesh.boundary_weight(k) * std::norm(h);
  }
  return num / den;
}

std::vector<double> default_tau_ladder(const Mesh& mesh, const SymbolOptions& opts) {
  const double nominal_max = 64.0 * 2.0 * std::numbers::pi / mesh.perimeter();
  const double top = std::min(nominal_max, nyquist_limit(mesh, opts.nodes_per_wavelength));
  const double bottom = top / 3.0;
  const int n = std::max(opts.ladder_points, 3);
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) out[k] = bottom * std::pow(top / bottom, static_cast<double>(k) / (n - 1));
  return out;
}

namespace {

/// Least squares y ~ sum_j c_j x^{powers_j}; returns coefficients and rms misfit.
Eigen::VectorXd polyfit(const std::vector<double>& x, const std::vector<double>& y,
                        const std::vector<int>& powers, double& rms) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd V(n, static_cast<Eigen::Index>(powers.size()));
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < powers.size(); ++j) V(i, static_cast<Eigen::Index>(j)) = std::pow(x[i], powers[j]);
    b[i] = y[i];
  }
  const Eigen::VectorXd c = V.colPivHouseholderQr().solve(b);
  rms = std::sqrt((V * c - b).squaredNorm() / static_cast<double>(n));
  return c;
}

}  // namespace

SymbolEstimate extract_symbol(const DnEvaluator& dn, const Mesh& mesh, const BoundaryFrame& frame, double s,
                              const Vec2& p, const SymbolOptions& opts) {
  SymbolEstimate est;
  est.frame = frame;
  est.s = s;
  est.p = p;
  est.tau_list = opts.tau_list.empty() ? default_tau_ladder(mesh, opts) : opts.tau_list;
  const int nt = static_cast<int>(est.tau_list.size());
  const int min_points = opts.dispersion_term ? 4 : 3;
  if (nt < min_points) {
    est.message = "too few probe frequencies";
    return est;
  }

  std::vector<double> even_re, odd_im;
  double pmax = 0.0, wrong = 0.0;
  for (double tau : est.tau_list) {
    const double w = opts.width_factor / std::sqrt(tau);
    const Complex pp = probe_pairing(dn, mesh, oscillatory_probe(mesh, frame, +1.0, tau, w, opts.plateau, opts.nodes_per_wavelength));
    const Complex pm = probe_pairing(dn, mesh, oscillatory_probe(mesh, frame, -1.0, tau, w, opts.plateau, opts.nodes_per_wavelength));
    est.pairing_plus.push_back(pp);
    est.pairing_minus.push_back(pm);
    const Complex even = 0.5 * (pp + pm), odd = 0.5 * (pp - pm);
    even_re.push_back(even.real());
    odd_im.push_back(odd.imag());
    pmax = std::max({pmax, std::abs(pp), std::abs(pm)});
    wrong = std::max({wrong, std::abs(even.imag()), std::abs(odd.real())});
  }
  est.parity_residual = pmax > 0.0 ? wrong / pmax : 0.0;

  double rms_re = 0.0, rms_im = 0.0;
  const std::vector<int> re_powers = opts.dispersion_term ? std::vector<int>{0, 1, 3} : std::vector<int>{0, 1};
  const Eigen::VectorXd cr = polyfit(est.tau_list, even_re, re_powers, rms_re);
  const Eigen::VectorXd ci = polyfit(est.tau_list, odd_im, re_powers, rms_im);
  est.real_intercept = cr[0];
  est.real_slope = cr[1];
  est.dispersion = opts.dispersion_term ? cr[2] : 0.0;
  est.imag_intercept = ci[0];
  est.imag_slope = ci[1];
  double scale = 0.0;
  for (double v : even_re) scale = std::max(scale, std::abs(v));
  est.fit_residual = scale > 0.0 ? std::hypot(rms_re, rms_im) / scale : 0.0;

  est.reliable = est.real_slope > 0.0 && est.fit_residual <= opts.fit_threshold;
  if (!est.reliable) est.message = est.real_slope > 0.0 ? "fit residual above threshold" : "non-positive real slope";
  return est;
}

MeasuredInvariants measured_invariants(const SymbolEstimate& sym) {
  return {sym.real_slope * sym.real_slope, sym.imag_slope};
}

std::vector<double> spectrum_of_recovery_matrix(double a, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  if (q.size() != p.size() || p.size() < 2) throw std::invalid_argument("spectrum needs vectors of equal size >= 2");
  const auto n = p.size();
  const double pq = p.dot(q);
  const double nn = p.norm() * q.norm();
  std::vector<double> ev;
  ev.push_back(a + 0.5 * pq - 0.5 * nn);
  for (Eigen::Index k = 0; k + 2 < n; ++k) ev.push_back(a);
  ev.push_back(a + 0.5 * pq + 0.5 * nn);
  std::sort(ev.begin(), ev.end());
  return ev;
}

TangentialRecovery recover_from_tangential_matrix(const Eigen::MatrixXd& M, const Eigen::VectorXd& pp) {
  const auto n = pp.size();
  if (M.rows() != n || M.cols() != n || n < 2) throw std::invalid_argument("tangential matrix size mismatch");
  TangentialRecovery out;
  const double pn2 = pp.squaredNorm();
  if (pn2 == 0.0) {
    out.a = M(0, 0);
    out.grad = Eigen::VectorXd::Zero(n);
    out.grad_recovered = false;
    out.reassembly_residual = (M - out.a * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    return out;
  }
  // orthonormal complement of p' from a QR of [p' I]
  Eigen::MatrixXd B(n, n);
  B.col(0) = pp / std::sqrt(pn2);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(B.leftCols(1));
  const Eigen::MatrixXd Q = qr.householderQ();
  double a = 0.0;
  for (Eigen::Index k = 1; k < n; ++k) a += Q.col(k).dot(M * Q.col(k));
  a /= static_cast<double>(n - 1);
  // M p' - a p' = ((p'.q) p' + |p'|^2 q)/2 ; with r = rhs: p'.q = p'.r / |p'|^2
  const Eigen::VectorXd r = 2.0 * (M * pp - a * pp);
  const double pq = pp.dot(r) / (2.0 * pn2);
  out.a = a;
  out.grad = (r - pq * pp) / pn2;
  const Eigen::MatrixXd R = a * Eigen::MatrixXd::Identity(n, n) + 0.5 * (out.grad * pp.transpose() + pp * out.grad.transpose());
  out.reassembly_residual = (R - M).cwiseAbs().maxCoeff();
  return out;
}

std::vector<double> cumulative_integral(const std::vector<double>& f, double dq) {
  const std::size_t n = f.size();
  std::vector<double> F(n, 0.0);
  if (n < 2) return F;
  if (n < 4) {
    // not enough nodes for the cubic start: Simpson on [0, 2dq], trapezoid otherwise
    F[1] = 0.5 * dq * (f[0] + f[1]);
    if (n == 3) {
      F[2] = dq / 3.0 * (f[0] + 4.0 * f[1] + f[2]);
      F[1] = dq / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2]);
    }
    return F;
  }
  // first interval: integral of the cubic through f0..f3
  F[1] = dq / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]);
  for (std::size_t k = 2; k < n; ++k) {
    // Simpson over [k-2, k] from F[k-2]
    F[k] = F[k - 2] + dq / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
  }
  return F;
}

RadialProfile radial_integration_recovery(const std::vector<double>& radii, const std::vector<double>& D) {
  if (radii.size() != D.size() || radii.empty()) throw std::invalid_argument("radial samples size mismatch");
  if (radii.front() != 0.0) throw std::invalid_argument("radial grid must start at 0");
  RadialProfile out;
  out.radii = radii;
  out.a_hat.resize(radii.size());
  const double dq = radii.size() > 1 ? radii[1] - radii[0] : 0.0;
  for (std::size_t k = 1; k < radii.size(); ++k)
    if (std::abs((radii[k] - radii[k - 1]) - dq) > 1e-9 * (1.0 + std::abs(dq)))
      throw std::invalid_argument("radial grid must be uniform");
  std::vector<double> integrand(D.size());
  for (std::size_t k = 0; k < D.size(); ++k) {
    if (D[k] < 0.0) out.consistent = false;
    integrand[k] = 2.0 * radii[k] * D[k];
  }
  const std::vector<double> I = cumulative_integral(integrand, dq);
  out.a_hat[0] = std::sqrt(std::max(D[0], 0.0));
  for (std::size_t k = 1; k < radii.size(); ++k) {
    if (I[k] < 0.0) out.consistent = false;
    out.a_hat[k] = std::sqrt(std::max(I[k], 0.0)) / radii[k];
  }
  return out;
}

void write_recovery_csv(std::ostream& os, const RecoveryGrid& grid) {
  os.precision(10);
  os << "s,p1,p2,a_hat,a_true,rel_err,status\n";
  for (const auto& r : grid.samples) {
    os << r.s << ',' << r.p.x() << ',' << r.p.y() << ',' << r.a_hat << ',';
    if (r.a_true) os << *r.a_true;
    os << ',';
    if (r.rel_err) os << *r.rel_err;
    os << ',' << r.status << '\n';
  }
}

void write_symbols_csv(std::ostream& os, const std::vector<SymbolEstimate>& symbols) {
  os.precision(10);
  os << "theta,s,p1,p2,tau,re_plus,im_plus,re_minus,im_minus,real_slope,imag_slope,fit_residual,parity_residual,reliable\n";
  for (const auto& e : symbols)
    for (std::size_t k = 0; k < e.tau_list.size(); ++k)
      os << e.frame.theta << ',' << e.s << ',' << e.p.x() << ',' << e.p.y() << ',' << e.tau_list[k] << ','
         << e.pairing_plus[k].real() << ',' << e.pairing_plus[k].imag() << ',' << e.pairing_minus[k].real() << ','
         << e.pairing_minus[k].imag() << ',' << e.real_slope << ',' << e.imag_slope << ',' << e.fit_residual << ','
         << e.parity_residual << ',' << (e.reliable ? 1 : 0) << '\n';
}

}  // namespace qcond
