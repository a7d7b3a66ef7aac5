#include "qcond/linearization.hpp"

#include <cmath>
#include <stdexcept>

namespace qcond {

BlockSystem linearized_stiffness(const ConductivitySpec& cond, const BlockPattern& pattern,
                                 const Vec& base_u) {
  const Mesh& m = pattern.mesh();
  BlockSystem sys = pattern.make_system();
  pattern.assemble(sys, [&](int t, Eigen::Matrix3d& K) {
    const auto& tri = m.triangles()[t];
    const auto& g = m.basis_gradients(t);
    const Vec2 du = g.col(0) * base_u[tri[0]] + g.col(1) * base_u[tri[1]] + g.col(2) * base_u[tri[2]];
    const double ubar = (base_u[tri[0]] + base_u[tri[1]] + base_u[tri[2]]) / 3.0;
    PVec p(2);
    p << du.x(), du.y();
    const ConductivityJet jet = cond.evaluate(ubar, p);
    const PMat M = linearized_conductivity(jet, p) + antisymmetric_part(jet, p);
    const Eigen::Matrix2d M2 = M.topLeftCorner(2, 2);
    const Vec2 b = jet.a_s * du;
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j)
        K(k, j) = m.area(t) * (g.col(k).dot(M2 * g.col(j)) + b.dot(g.col(k)) / 3.0);
  });
  return sys;
}

LinearizedOperator::LinearizedOperator(const ForwardSolver& solver, const DiscreteSolution& base,
                                       double condition_threshold)
    : pattern_(&solver.pattern()) {
  K_ = solver.jacobian(base.u);
  if (pattern_->num_interior() == 0) {
    ok_ = true;
    condition_ = 1.0;
    return;
  }
  lu_.analyze(K_.II);
  if (!lu_.factorize(K_.II)) {
    message_ = "linearized stiffness is singular";
    condition_ = std::numeric_limits<double>::infinity();
    return;
  }
  condition_ = lu_.condition_estimate(K_.II);
  ok_ = std::isfinite(condition_) && condition_ <= condition_threshold;
  if (!ok_) message_ = "linearized stiffness condition estimate " + std::to_string(condition_) + " above threshold";
}

Vec LinearizedOperator::solve(const Vec& h) const {
  if (!ok_) throw std::runtime_error("linearized operator unavailable: " + message_);
  if (pattern_->num_interior() == 0) return pattern_->scatter(Vec(0), h);
  const Vec vi = lu_.solve(-(K_.IB * h));
  return pattern_->scatter(vi, h);
}

FluxDensity LinearizedOperator::flux(const Vec& v) const {
  const Mesh& m = pattern_->mesh();
  const Vec r = K_.BI * pattern_->gather_interior(v) + K_.BB * pattern_->gather_boundary(v);
  FluxDensity fd;
  fd.nodal.resize(m.num_boundary());
  for (int k = 0; k < m.num_boundary(); ++k) fd.nodal[k] = r[k] / m.boundary_weight(k);
  return fd;
}

LinearizedSolve solve_linearized(const ForwardSolver& solver, const DiscreteSolution& base, const Vec& h,
                                 double condition_threshold) {
  LinearizedSolve out;
  out.h = h;
  if (!base.converged) {
    out.message = "base solution did not converge";
    return out;
  }
  LinearizedOperator op(solver, base, condition_threshold);
  out.condition = op.condition_estimate();
  if (!op.ok()) {
    out.message = op.message();
    return out;
  }
  out.v = op.solve(h);
  out.flux = op.flux(out.v);
  out.ok = true;
  return out;
}

FluxDensity linearized_dn(const LinearizedSolve& lin) {
  if (!lin.ok) throw std::runtime_error("linearized solve failed: " + lin.message);
  return lin.flux;
}

std::vector<FdCheckRow> fd_derivative_check(const ForwardSolver& solver, const Vec& f, const Vec& h,
                                            const std::vector<double>& t_list) {
  const DiscreteSolution base = solver.solve(f);
  const LinearizedSolve lin = solve_linearized(solver, base, h);
  std::vector<FdCheckRow> rows;
  for (double t : t_list) {
    FdCheckRow row;
    row.t = t;
    const Vec ft = f + t * h;
    const DiscreteSolution st = solver.solve(ft, &base.u);
    row.converged = base.converged && st.converged && lin.ok;
    if (row.converged) row.error = ((st.u - base.u) / t - lin.v).cwiseAbs().maxCoeff();
    else row.error = std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace qcond
