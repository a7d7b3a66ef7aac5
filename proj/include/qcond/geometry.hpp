#pragma once

// Metric / effective-conductivity dictionary for the linearized operator and
// the identities relating it to a magnetic Schrodinger operator.

#include "qcond/conductivity.hpp"
#include "qcond/forward_solver.hpp"
#include "qcond/mesh.hpp"

#include <functional>
#include <vector>

namespace qcond {

/// Pointwise metric data of a linearized conductivity a_ij.
///   n = 2:  sigma G = a_ij with det G = 1, so sigma = sqrt(det a_ij).
///   n >= 3: G = (det a)^{1/(2-n)} a_ij, so (det G)^{-1/2} G = a_ij.
/// g is the inverse of G; sqrt_g = sqrt(det g).
struct MetricData {
  int dim = 2;
  PMat G;
  PMat g;
  double det_a = 0.0;
  double sigma = 1.0;   // n = 2 only (1 otherwise)
  double sqrt_g = 1.0;  // 1 in n = 2
};

/// Throws std::invalid_argument unless aij is symmetric positive definite.
[[nodiscard]] MetricData metric_from_linearized(const PMat& aij);

/// <V, W>_g = V^T g W for tangent vectors.
[[nodiscard]] double g_inner(const MetricData& md, const PVec& V, const PVec& W);

/// Magnetic covector from the first coefficient relation:
///   n = 2:  b + G grad(sigma) = 2 sigma G A
///   n >= 3: b = 2 sqrt_g G A   (grad_sigma ignored)
[[nodiscard]] PVec magnetic_potential(const PVec& b, const PVec& grad_sigma, const MetricData& md);

/// q from  div b = sigma (div_g A# + |A|_g^2 + q)  (sqrt_g replaces sigma for n >= 3).
[[nodiscard]] double scalar_potential(double div_b, double div_A_sharp, const PVec& A,
                                      const MetricData& md);

/// alpha^i_j = g_jk A_ik / sqrt_g.
[[nodiscard]] PMat alpha_tensor(const PMat& Aij, const MetricData& md);

struct NormalForms {
  PVec nu_g;
  double dS_g = 1.0;  // per unit Euclidean dS
};
[[nodiscard]] NormalForms metric_normal(const MetricData& md, const PVec& nu);

/// Both sides of
///   (a_ij nu_i v_j + A_ij nu_i v_j) dS = < c grad_g v + alpha . grad_g v, nu_g >_g dS_g
/// with c = sigma (n = 2) or 1 (n >= 3), for each test gradient; returns the
/// largest |lhs - rhs| / max(1, |lhs|).
[[nodiscard]] double normal_identity_residual(const PMat& aij, const PMat& Aij, const PVec& nu,
                                              const std::vector<PVec>& test_gradients);
/// Same identity at a boundary frame of a discrete solution, with the jet
/// measured from the solution and test gradients e_1, e_2, nu, tau.
[[nodiscard]] double normal_identity_residual(const ForwardSolver& solver, const DiscreteSolution& sol,
                                              const BoundaryFrame& frame);

/// beta = c nu_g with (a_s grad u . nu) dS = < sigma A# + beta, nu_g >_g dS_g.
[[nodiscard]] PVec beta_field(double a_s, const PVec& gradu, const PVec& nu, const PVec& A_mag,
                              const MetricData& md);
/// |(a_s grad u . nu) - <sigma A# + beta, nu_g>_g dS_g|.
[[nodiscard]] double beta_residual(double a_s, const PVec& gradu, const PVec& nu, const PVec& A_mag,
                                   const PVec& beta, const MetricData& md);

/// sigma |xi|_g dS_g per unit dS for a tangential covector xi (n = 2), with
/// |xi|_g the norm induced on the boundary. Equals sqrt(det a_ij)|xi|.
[[nodiscard]] double boundary_symbol_magnitude(const MetricData& md, const Vec2& nu, double xi);

/// Least-squares quadratic fit over the two-ring vertex patch.
class PatchRecovery {
 public:
  explicit PatchRecovery(const Mesh& mesh);
  struct Fit {
    double value = 0.0;
    Vec2 grad = Vec2::Zero();
    Mat2 hess = Mat2::Zero();
  };
  [[nodiscard]] Fit fit(const Vec& field, int vertex) const;
  [[nodiscard]] Vec2 gradient(const Vec& field, int vertex) const { return fit(field, vertex).grad; }
  /// Recovered gradients at every vertex (columns x, y).
  [[nodiscard]] Eigen::MatrixX2d gradients(const Vec& field) const;

 private:
  const Mesh* mesh_;
  std::vector<std::vector<int>> patch_;
  std::vector<Eigen::MatrixXd> pinv_;  // 6 x |patch|
  std::vector<double> scale_;
};

/// A test function for operator identities: value and gradient.
struct TestFunction {
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> gradient;
};
/// 1, x, y, x^2, xy, y^2.
[[nodiscard]] std::vector<TestFunction> quadratic_basis();

struct OperatorEquivalence {
  double relative_residual = 0.0;  // max |L1 - L2| / max |L1|
  double max_abs_residual = 0.0;
  double max_operator = 0.0;
  int vertices = 0;
  double h = 0.0;
  double max_det_G_error = 0.0;    // |det G - 1| over the evaluation vertices
};

/// Evaluates L_a[u]v = d_i(a_ij v_j + A_ij v_j + a_s u_i v) by recovering the
/// divergence of its flux, and sigma Delta_{g,A,q} v from the metric,
/// magnetic potential and q (all derivatives by patch recovery), at interior
/// vertices with |x - center| < radius.
[[nodiscard]] OperatorEquivalence operator_equivalence_residual(const ConductivitySpec& cond,
                                                                const DiscreteSolution& base,
                                                                double radius = 0.7);

}  // namespace qcond
