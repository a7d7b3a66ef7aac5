#include "qcond/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace qcond {

MetricData metric_from_linearized(const PMat& aij) {
  const int n = static_cast<int>(aij.rows());
  if (n < 2 || aij.cols() != n) throw std::invalid_argument("metric needs a square matrix of size >= 2");
  if ((aij - aij.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + aij.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("linearized conductivity is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(aij)};
  if (llt.info() != Eigen::Success) throw std::invalid_argument("linearized conductivity is not positive definite");

  MetricData md;
  md.dim = n;
  md.det_a = aij.determinant();
  if (n == 2) {
    md.sigma = std::sqrt(md.det_a);
    md.G = aij / md.sigma;
    md.sqrt_g = 1.0;
  } else {
    md.G = std::pow(md.det_a, 1.0 / (2.0 - n)) * aij;
    md.sqrt_g = 1.0 / std::sqrt(md.G.determinant());
  }
  md.g = md.G.inverse();
  return md;
}

double g_inner(const MetricData& md, const PVec& V, const PVec& W) { return V.dot(md.g * W); }

PVec magnetic_potential(const PVec& b, const PVec& grad_sigma, const MetricData& md) {
  if (md.dim == 2) return (md.g * b + grad_sigma) / (2.0 * md.sigma);
  return md.g * b / (2.0 * md.sqrt_g);
}

double scalar_potential(double div_b, double div_A_sharp, const PVec& A, const MetricData& md) {
  const double c = md.dim == 2 ? md.sigma : md.sqrt_g;
  return div_b / c - div_A_sharp - A.dot(md.G * A);
}

PMat alpha_tensor(const PMat& Aij, const MetricData& md) { return Aij * md.g / md.sqrt_g; }

NormalForms metric_normal(const MetricData& md, const PVec& nu) {
  const double gnn = nu.dot(md.G * nu);
  NormalForms nf;
  nf.nu_g = md.G * nu / std::sqrt(gnn);
  nf.dS_g = md.sqrt_g * std::sqrt(gnn);
  return nf;
}

double normal_identity_residual(const PMat& aij, const PMat& Aij, const PVec& nu,
                                const std::vector<PVec>& test_gradients) {
  const MetricData md = metric_from_linearized(aij);
  const NormalForms nf = metric_normal(md, nu);
  const PMat alpha = alpha_tensor(Aij, md);
  const double c = md.dim == 2 ? md.sigma : 1.0;
  double worst = 0.0;
  for (const PVec& dv : test_gradients) {
    const double lhs = nu.dot(aij * dv) + nu.dot(Aij * dv);
    const PVec grad_g = md.G * dv;
    const PVec field = c * grad_g + alpha * grad_g;
    const double rhs = g_inner(md, field, nf.nu_g) * nf.dS_g;
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  return worst;
}

double normal_identity_residual(const ForwardSolver& solver, const DiscreteSolution& sol,
                                const BoundaryFrame& frame) {
  const BoundaryJetEstimate est = solver.boundary_jet_of(sol, frame);
  PVec p(2), nu(2), tau(2), e1(2), e2(2);
  p << est.p.x(), est.p.y();
  nu << frame.nu.x(), frame.nu.y();
  tau << frame.tau.x(), frame.tau.y();
  e1 << 1.0, 0.0;
  e2 << 0.0, 1.0;
  const ConductivityJet jet = solver.conductivity().evaluate(est.s, p);
  return normal_identity_residual(linearized_conductivity(jet, p), antisymmetric_part(jet, p), nu,
                                  {e1, e2, nu, tau});
}

PVec beta_field(double a_s, const PVec& gradu, const PVec& nu, const PVec& A_mag, const MetricData& md) {
  const NormalForms nf = metric_normal(md, nu);
  const double c = md.dim == 2 ? md.sigma : 1.0;
  const double target = a_s * gradu.dot(nu) / nf.dS_g;
  const double coef = target - c * g_inner(md, md.G * A_mag, nf.nu_g);
  return coef * nf.nu_g;
}

double beta_residual(double a_s, const PVec& gradu, const PVec& nu, const PVec& A_mag, const PVec& beta,
                     const MetricData& md) {
  const NormalForms nf = metric_normal(md, nu);
  const double c = md.dim == 2 ? md.sigma : 1.0;
  const PVec field = c * (md.G * A_mag) + beta;
  return std::abs(a_s * gradu.dot(nu) - g_inner(md, field, nf.nu_g) * nf.dS_g);
}

double boundary_symbol_magnitude(const MetricData& md, const Vec2& nu, double xi) {
  if (md.dim != 2) throw std::invalid_argument("boundary symbol magnitude is two-dimensional");
  PVec n(2), t(2);
  n << nu.x(), nu.y();
  t << -nu.y(), nu.x();
  const double xi_g = std::abs(xi) / std::sqrt(t.dot(md.g * t));
  return md.sigma * xi_g * metric_normal(md, n).dS_g;
}

PatchRecovery::PatchRecovery(const Mesh& mesh) : mesh_(&mesh) {
  const auto& nb = mesh.vertex_neighbors();
  const int nv = mesh.num_vertices();
  patch_.resize(nv);
  pinv_.resize(nv);
  scale_.resize(nv);
  for (int v = 0; v < nv; ++v) {
    std::set<int> ring{v};
    for (int rings = 0; rings < 4; ++rings) {
      if (rings >= 2 && ring.size() >= 12) break;
      std::set<int> next = ring;
      for (int w : ring)
        for (int z : nb[w]) next.insert(z);
      ring.swap(next);
    }
    patch_[v].assign(ring.begin(), ring.end());
    const Vec2 c = mesh.vertices()[v];
    double sc = 0.0;
    for (int w : patch_[v]) sc = std::max(sc, (mesh.vertices()[w] - c).norm());
    scale_[v] = sc;
    Eigen::MatrixXd V(patch_[v].size(), 6);
    for (std::size_t k = 0; k < patch_[v].size(); ++k) {
      const Vec2 d = (mesh.vertices()[patch_[v][k]] - c) / sc;
      V.row(static_cast<Eigen::Index>(k)) << 1.0, d.x(), d.y(), d.x() * d.x(), d.x() * d.y(), d.y() * d.y();
    }
    pinv_[v] = V.completeOrthogonalDecomposition().pseudoInverse();
  }
}

PatchRecovery::Fit PatchRecovery::fit(const Vec& field, int vertex) const {
  const auto& pt = patch_[vertex];
  Eigen::VectorXd f(pt.size());
  for (std::size_t k = 0; k < pt.size(); ++k) f[static_cast<Eigen::Index>(k)] = field[pt[k]];
  const Eigen::VectorXd c = pinv_[vertex] * f;
  const double sc = scale_[vertex];
  Fit out;
  out.value = c[0];
  out.grad = Vec2(c[1], c[2]) / sc;
  out.hess << 2.0 * c[3], c[4], c[4], 2.0 * c[5];
  out.hess /= sc * sc;
  return out;
}

Eigen::MatrixX2d PatchRecovery::gradients(const Vec& field) const {
  Eigen::MatrixX2d out(mesh_->num_vertices(), 2);
  for (int v = 0; v < mesh_->num_vertices(); ++v) out.row(v) = gradient(field, v).transpose();
  return out;
}

std::vector<TestFunction> quadratic_basis() {
  return {
      {[](const Vec2&) { return 1.0; }, [](const Vec2&) { return Vec2(0.0, 0.0); }},
      {[](const Vec2& x) { return x.x(); }, [](const Vec2&) { return Vec2(1.0, 0.0); }},
      {[](const Vec2& x) { return x.y(); }, [](const Vec2&) { return Vec2(0.0, 1.0); }},
      {[](const Vec2& x) { return x.x() * x.x(); }, [](const Vec2& x) { return Vec2(2.0 * x.x(), 0.0); }},
      {[](const Vec2& x) { return x.x() * x.y(); }, [](const Vec2& x) { return Vec2(x.y(), x.x()); }},
      {[](const Vec2& x) { return x.y() * x.y(); }, [](const Vec2& x) { return Vec2(0.0, 2.0 * x.y()); }},
  };
}

OperatorEquivalence operator_equivalence_residual(const ConductivitySpec& cond, const DiscreteSolution& base,
                                                  double radius) {
  const Mesh& m = *base.mesh;
  const int nv = m.num_vertices();
  const PatchRecovery rec(m);

  // coefficient fields at vertices from the recovered base gradient
  const Eigen::MatrixX2d du = rec.gradients(base.u);
  std::vector<Mat2> M(nv), G(nv);
  Vec A12(nv), sigma(nv), a_s(nv);
  std::vector<MetricData> metric(nv);
  for (int v = 0; v < nv; ++v) {
    PVec p(2);
    p << du(v, 0), du(v, 1);
    const ConductivityJet jet = cond.evaluate(base.u[v], p);
    const PMat aij = linearized_conductivity(jet, p);
    const PMat Aij = antisymmetric_part(jet, p);
    metric[v] = metric_from_linearized(aij);
    M[v] = aij + Aij;
    G[v] = metric[v].G;
    A12[v] = Aij(0, 1);
    sigma[v] = metric[v].sigma;
    a_s[v] = jet.a_s;
  }

  // b^i = a_s u_i - d_j A_ij
  const Eigen::MatrixX2d dA12 = rec.gradients(A12);
  Vec b1(nv), b2(nv);
  for (int v = 0; v < nv; ++v) {
    b1[v] = a_s[v] * du(v, 0) - dA12(v, 1);
    b2[v] = a_s[v] * du(v, 1) + dA12(v, 0);
  }
  const Eigen::MatrixX2d dsigma = rec.gradients(sigma);
  Vec Amag1(nv), Amag2(nv), Ash1(nv), Ash2(nv);
  for (int v = 0; v < nv; ++v) {
    PVec b(2), gs(2);
    b << b1[v], b2[v];
    gs << dsigma(v, 0), dsigma(v, 1);
    const PVec A = magnetic_potential(b, gs, metric[v]);
    const PVec Ash = metric[v].G * A;
    Amag1[v] = A[0];
    Amag2[v] = A[1];
    Ash1[v] = Ash[0];
    Ash2[v] = Ash[1];
  }
  const Eigen::MatrixX2d db1 = rec.gradients(b1), db2 = rec.gradients(b2);
  const Eigen::MatrixX2d dAsh1 = rec.gradients(Ash1), dAsh2 = rec.gradients(Ash2);

  std::vector<int> eval;
  for (int v = 0; v < nv; ++v)
    if (!m.is_boundary(v) && (m.vertices()[v] - m.center()).norm() < radius) eval.push_back(v);

  OperatorEquivalence out;
  out.vertices = static_cast<int>(eval.size());
  out.h = m.h();
  for (int v : eval) out.max_det_G_error = std::max(out.max_det_G_error, std::abs(G[v].determinant() - 1.0));

  for (const TestFunction& tf : quadratic_basis()) {
    Vec F1(nv), F2(nv), H1(nv), H2(nv);
    for (int v = 0; v < nv; ++v) {
      const Vec2 x = m.vertices()[v];
      const Vec2 dv = tf.gradient(x);
      const Vec2 du_v(du(v, 0), du(v, 1));
      const Vec2 F = M[v] * dv + a_s[v] * du_v * tf.value(x);
      F1[v] = F.x();
      F2[v] = F.y();
      const Vec2 H = G[v] * dv;
      H1[v] = H.x();
      H2[v] = H.y();
    }
    for (int v : eval) {
      const Vec2 x = m.vertices()[v];
      const double L1 = rec.gradient(F1, v).x() + rec.gradient(F2, v).y();

      const MetricData& md = metric[v];
      PVec A(2);
      A << Amag1[v], Amag2[v];
      const double div_b = db1(v, 0) + db2(v, 1);
      const double div_Ash = dAsh1(v, 0) + dAsh2(v, 1);
      const double q = scalar_potential(div_b, div_Ash, A, md);
      const double lap_g = rec.gradient(H1, v).x() + rec.gradient(H2, v).y();
      const Vec2 dv = tf.gradient(x);
      const Vec2 Ash(Ash1[v], Ash2[v]);
      const double L2 = md.sigma * (lap_g + 2.0 * Ash.dot(dv) +
                                    (div_Ash + A.dot(md.G * A) + q) * tf.value(x));
      out.max_abs_residual = std::max(out.max_abs_residual, std::abs(L1 - L2));
      out.max_operator = std::max(out.max_operator, std::abs(L1));
    }
  }
  out.relative_residual = out.max_operator > 0.0 ? out.max_abs_residual / out.max_operator : out.max_abs_residual;
  return out;
}

}  // namespace qcond
