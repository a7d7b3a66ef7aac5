#include "qcond/forward_solver.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace qcond {

namespace {

struct TriangleState {
  Vec2 grad;
  double mean = 0.0;
};

TriangleState triangle_state(const Mesh& m, int t, const Vec& u) {
  const auto& tri = m.triangles()[t];
  const auto& g = m.basis_gradients(t);
  TriangleState st;
  st.grad = g.col(0) * u[tri[0]] + g.col(1) * u[tri[1]] + g.col(2) * u[tri[2]];
  st.mean = (u[tri[0]] + u[tri[1]] + u[tri[2]]) / 3.0;
  return st;
}

PVec as_pvec(const Vec2& v) {
  PVec p(2);
  p << v.x(), v.y();
  return p;
}

}  // namespace

Vec FluxDensity::edge_values() const {
  const auto n = nodal.size();
  Vec e(n);
  for (Eigen::Index k = 0; k < n; ++k) e[k] = 0.5 * (nodal[k] + nodal[(k + 1) % n]);
  return e;
}

double FluxDensity::total(const Mesh& mesh) const {
  double sum = 0.0;
  for (int k = 0; k < mesh.num_boundary(); ++k) sum += nodal[k] * mesh.boundary_weight(k);
  return sum;
}

Vec sample_boundary(const Mesh& mesh, const PointFunction& f) {
  Vec out(mesh.num_boundary());
  for (int k = 0; k < mesh.num_boundary(); ++k) out[k] = f(mesh.vertices()[mesh.boundary_vertices()[k]]);
  return out;
}

ForwardSolver::ForwardSolver(ConductivitySpec cond, std::shared_ptr<const Mesh> mesh,
                             NewtonOptions opts)
    : cond_(std::move(cond)), pattern_(std::move(mesh)), opts_(opts) {
  if (cond_.dim() != 2) throw std::invalid_argument("forward solver is two-dimensional");
  laplace_ = pattern_.make_system();
  const Mesh& m = pattern_.mesh();
  pattern_.assemble(laplace_, [&m](int t, Eigen::Matrix3d& K) {
    const auto& g = m.basis_gradients(t);
    K = m.area(t) * (g.transpose() * g);
  });
  laplace_solver_.analyze(laplace_.II);
  if (!laplace_solver_.factorize(laplace_.II)) throw std::runtime_error("Laplace factorization failed");
}

Vec ForwardSolver::harmonic_extension(const Vec& f) const {
  if (pattern_.num_interior() == 0) return pattern_.scatter(Vec(0), f);
  const Vec ui = laplace_solver_.solve(-(laplace_.IB * f));
  return pattern_.scatter(ui, f);
}

Vec ForwardSolver::load_vector(const PointFunction& source) const {
  const Mesh& m = pattern_.mesh();
  Vec load = Vec::Zero(m.num_vertices());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    const Vec2 p[3] = {m.vertices()[tri[0]], m.vertices()[tri[1]], m.vertices()[tri[2]]};
    // midpoint of edge opposite vertex i
    double gm[3];
    for (int i = 0; i < 3; ++i) gm[i] = source(0.5 * (p[(i + 1) % 3] + p[(i + 2) % 3]));
    for (int i = 0; i < 3; ++i) {
      // phi_i = 1/2 on the two midpoints adjacent to vertex i
      load[tri[i]] += m.area(t) / 3.0 * 0.5 * (gm[(i + 1) % 3] + gm[(i + 2) % 3]);
    }
  }
  return load;
}

Vec ForwardSolver::residual(const Vec& u, const Vec* load) const {
  const Mesh& m = pattern_.mesh();
  Vec r = load ? *load : Vec::Zero(m.num_vertices());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto st = triangle_state(m, t, u);
    const double a = cond_.value(st.mean, as_pvec(st.grad));
    const Vec2 flux = m.area(t) * a * st.grad;
    const auto& g = m.basis_gradients(t);
    const auto& tri = m.triangles()[t];
    for (int i = 0; i < 3; ++i) r[tri[i]] += flux.dot(g.col(i));
  }
  return r;
}

double ForwardSolver::residual_scale(const Vec& u, const Vec* load) const {
  const Mesh& m = pattern_.mesh();
  Vec sc = load ? Vec(load->cwiseAbs()) : Vec::Zero(m.num_vertices());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto st = triangle_state(m, t, u);
    const double a = cond_.value(st.mean, as_pvec(st.grad));
    const auto& g = m.basis_gradients(t);
    const auto& tri = m.triangles()[t];
    for (int i = 0; i < 3; ++i) sc[tri[i]] += m.area(t) * std::abs(a) * st.grad.norm() * g.col(i).norm();
  }
  double s = 0.0;
  for (int v : pattern_.interior_vertices()) s = std::max(s, sc[v]);
  return s;
}

BlockSystem ForwardSolver::jacobian(const Vec& u) const {
  const Mesh& m = pattern_.mesh();
  BlockSystem sys = pattern_.make_system();
  pattern_.assemble(sys, [&](int t, Eigen::Matrix3d& K) {
    const auto st = triangle_state(m, t, u);
    const ConductivityJet jet = cond_.evaluate(st.mean, as_pvec(st.grad));
    const auto& g = m.basis_gradients(t);
    const Vec2 ap(jet.grad_p[0], jet.grad_p[1]);
    // d/du_m of |T| a(ubar, grad u) grad u . grad phi_k
    const Eigen::RowVector3d ugk = st.grad.transpose() * g;  // grad u . grad phi_k
    const Eigen::RowVector3d apm = ap.transpose() * g;       // a_p . grad phi_m
    K = m.area(t) * (jet.a * (g.transpose() * g) + ugk.transpose() * apm +
                     (jet.a_s / 3.0) * ugk.transpose() * Eigen::RowVector3d::Ones());
  });
  return sys;
}

DiscreteSolution ForwardSolver::solve(const Vec& f, const Vec* initial,
                                      const PointFunction* source) const {
  const Mesh& m = pattern_.mesh();
  if (f.size() != m.num_boundary()) throw std::invalid_argument("boundary data size mismatch");

  DiscreteSolution sol;
  sol.mesh = pattern_.mesh_ptr();
  sol.f = f;
  if (initial) {
    sol.u = *initial;
    for (int k = 0; k < m.num_boundary(); ++k) sol.u[m.boundary_vertices()[k]] = f[k];
  } else {
    sol.u = harmonic_extension(f);
  }

  Vec load;
  const Vec* loadp = nullptr;
  if (source) {
    load = load_vector(*source);
    loadp = &load;
  }

  auto interior_norm = [this](const Vec& r) {
    double mx = 0.0;
    for (int v : pattern_.interior_vertices()) mx = std::max(mx, std::abs(r[v]));
    return mx;
  };

  if (pattern_.num_interior() == 0) {
    sol.converged = true;
    return sol;
  }

  InteriorSolver lin;
  BlockSystem J = pattern_.make_system();
  lin.analyze(J.II);

  // round-off floor for data with a vanishing residual scale (constants)
  const double floor = 1e-13 * (1.0 + f.cwiseAbs().maxCoeff()) * m.h();
  auto tolerance = [&](double scale) { return std::max(opts_.rel_tol * scale, floor); };

  Vec r = residual(sol.u, loadp);
  double rn = interior_norm(r);
  double scale = std::max(residual_scale(sol.u, loadp), 1e-300);
  sol.residual_history.push_back(rn / scale);
  bool polished = !opts_.polish;

  for (int it = 0; it < opts_.max_iters; ++it) {
    if (rn <= tolerance(scale)) {
      sol.converged = true;
      if (polished || rn <= 1e-15 * scale) break;
      polished = true;
    }
    J = jacobian(sol.u);
    if (!lin.factorize(J.II)) {
      sol.converged = false;
      sol.message = "Newton Jacobian factorization failed";
      break;
    }
    const Vec delta = lin.solve(-pattern_.gather_interior(r));
    Vec step = pattern_.scatter(delta, Vec::Zero(m.num_boundary()));

    double lam = 1.0;
    Vec trial, rt;
    double rtn = 0.0;
    int halvings = 0;
    for (;; ++halvings) {
      trial = sol.u + lam * step;
      rt = residual(trial, loadp);
      rtn = interior_norm(rt);
      if (std::isfinite(rtn) && (rtn <= (1.0 - 1e-4 * lam) * rn || sol.converged)) break;
      if (halvings >= opts_.max_halvings) break;
      lam *= 0.5;
    }
    if (!std::isfinite(rtn) || (rtn > rn && !sol.converged)) {
      sol.message = "line search failed to reduce the residual";
      sol.converged = false;
      break;
    }
    if (sol.converged && rtn > rn) break;  // polish step made no progress
    sol.u = std::move(trial);
    r = std::move(rt);
    rn = rtn;
    ++sol.newton_iters;
    scale = std::max(residual_scale(sol.u, loadp), 1e-300);
    sol.residual_history.push_back(rn / scale);
  }
  if (!sol.converged && rn <= tolerance(scale)) sol.converged = true;
  sol.residual_norm = rn / scale;
  if (!sol.converged && sol.message.empty())
    sol.message = "Newton did not converge in " + std::to_string(opts_.max_iters) + " iterations";
  return sol;
}

FluxDensity ForwardSolver::dn_map(const DiscreteSolution& sol, const PointFunction* source) const {
  const Mesh& m = pattern_.mesh();
  Vec load;
  const Vec* loadp = nullptr;
  if (source) {
    load = load_vector(*source);
    loadp = &load;
  }
  const Vec r = residual(sol.u, loadp);
  FluxDensity fd;
  fd.nodal.resize(m.num_boundary());
  for (int k = 0; k < m.num_boundary(); ++k) fd.nodal[k] = r[m.boundary_vertices()[k]] / m.boundary_weight(k);
  return fd;
}

double tangential_derivative(const Mesh& mesh, const Vec& f, int k) {
  const int nb = mesh.num_boundary();
  const int km = (k + nb - 1) % nb, kp = (k + 1) % nb;
  const auto& bv = mesh.boundary_vertices();
  const double d1 = (mesh.vertices()[bv[k]] - mesh.vertices()[bv[km]]).norm();
  const double d2 = (mesh.vertices()[bv[kp]] - mesh.vertices()[bv[k]]).norm();
  return -d2 / (d1 * (d1 + d2)) * f[km] + (d2 - d1) / (d1 * d2) * f[k] + d1 / (d2 * (d1 + d2)) * f[kp];
}

BoundaryJetEstimate ForwardSolver::boundary_jet_of(const DiscreteSolution& sol,
                                                   const BoundaryFrame& frame) const {
  const Mesh& m = pattern_.mesh();
  const int k = m.boundary_position(frame.vertex);
  if (k < 0) throw std::invalid_argument("frame vertex is not a boundary vertex");
  BoundaryJetEstimate est;
  est.s = sol.u[frame.vertex];
  est.p_tau = tangential_derivative(m, sol.f, k);
  est.flux = dn_map(sol).nodal[k];

  // flux = a(s, p_tau tau + q nu) q, increasing in q with slope nu.a_ij.nu > 0
  auto g = [&](double q, double* dg) {
    const PVec p = as_pvec(est.p_tau * frame.tau + q * frame.nu);
    const ConductivityJet jet = cond_.evaluate(est.s, p);
    if (dg) *dg = jet.a + q * (jet.grad_p[0] * frame.nu.x() + jet.grad_p[1] * frame.nu.y());
    return jet.a * q - est.flux;
  };
  double q = est.flux / std::max(1.0, cond_.value(est.s, as_pvec(est.p_tau * frame.tau)));
  bool done = false;
  for (int it = 0; it < 60 && !done; ++it) {
    double dg = 0.0;
    const double val = g(q, &dg);
    if (!(dg > 0.0) || !std::isfinite(val)) break;
    const double dq = val / dg;
    q -= dq;
    done = std::abs(dq) <= 1e-14 * (1.0 + std::abs(q));
  }
  est.ok = done && std::isfinite(q);
  est.p_nu = q;
  est.p = est.p_tau * frame.tau + est.p_nu * frame.nu;
  return est;
}

DiscreteSolution solve_dirichlet(const ConductivitySpec& cond, std::shared_ptr<const Mesh> mesh,
                                 const PointFunction& f, NewtonOptions opts) {
  ForwardSolver fs(cond, mesh, opts);
  return fs.solve(sample_boundary(*mesh, f));
}

FluxDensity dn_map(const ConductivitySpec& cond, const DiscreteSolution& sol) {
  ForwardSolver fs(cond, sol.mesh);
  return fs.dn_map(sol);
}

BoundaryJetEstimate boundary_jet_of(const ConductivitySpec& cond, const DiscreteSolution& sol,
                                    const BoundaryFrame& frame) {
  ForwardSolver fs(cond, sol.mesh);
  return fs.boundary_jet_of(sol, frame);
}

void write_solution(std::ostream& os, const DiscreteSolution& sol) {
  os.precision(17);
  for (Eigen::Index v = 0; v < sol.u.size(); ++v) os << "u " << v << ' ' << sol.u[v] << '\n';
}

void write_flux(std::ostream& os, const FluxDensity& flux) {
  os.precision(17);
  const Vec e = flux.edge_values();
  for (Eigen::Index k = 0; k < e.size(); ++k) os << "flux " << k << ' ' << e[k] << '\n';
}

}  // namespace qcond
