#pragma once

// Linearized Dirichlet problem d_i(a_s v u_i + a_{p_j} v_j u_i + a v_i) = 0 at
// a base solution, its DN map, and the finite-difference cross-check.

#include "qcond/forward_solver.hpp"

#include <string>
#include <vector>

namespace qcond {

/// Stiffness of the linearized operator assembled from the coefficient
/// splitting a_ij + A_ij (second order) and a_s grad u (first order). Written
/// independently of ForwardSolver::jacobian; the two must agree.
[[nodiscard]] BlockSystem linearized_stiffness(const ConductivitySpec& cond, const BlockPattern& pattern,
                                               const Vec& base_u);

/// Factorized linearized operator at a fixed base; immutable once built.
class LinearizedOperator {
 public:
  LinearizedOperator(const ForwardSolver& solver, const DiscreteSolution& base,
                     double condition_threshold = 1e12);

  [[nodiscard]] bool ok() const { return ok_; }
  [[nodiscard]] const std::string& message() const { return message_; }
  [[nodiscard]] double condition_estimate() const { return condition_; }
  [[nodiscard]] const BlockSystem& stiffness() const { return K_; }
  [[nodiscard]] const BlockPattern& pattern() const { return *pattern_; }

  /// Nodal solution with boundary values h (loop order).
  [[nodiscard]] Vec solve(const Vec& h) const;
  /// Outward flux density of the linearized operator for nodal v.
  [[nodiscard]] FluxDensity flux(const Vec& v) const;
  [[nodiscard]] FluxDensity dn(const Vec& h) const { return flux(solve(h)); }

 private:
  const BlockPattern* pattern_;
  BlockSystem K_;
  InteriorSolver lu_;
  double condition_ = 0.0;
  bool ok_ = false;
  std::string message_;
};

struct LinearizedSolve {
  Vec h;
  Vec v;
  FluxDensity flux;
  double condition = 0.0;
  bool ok = false;
  std::string message;
};

[[nodiscard]] LinearizedSolve solve_linearized(const ForwardSolver& solver, const DiscreteSolution& base,
                                               const Vec& h, double condition_threshold = 1e12);
[[nodiscard]] FluxDensity linearized_dn(const LinearizedSolve& lin);

struct FdCheckRow {
  double t = 0.0;
  double error = 0.0;  // max |(u[f+th]-u[f])/t - v|
  bool converged = true;
};

[[nodiscard]] std::vector<FdCheckRow> fd_derivative_check(const ForwardSolver& solver, const Vec& f,
                                                          const Vec& h, const std::vector<double>& t_list);

}  // namespace qcond
