#pragma once

// Damped Newton solver for div(a(u, grad u) grad u) = g on P1 elements with
// strong Dirichlet data, and the variational Dirichlet-to-Neumann flux.

#include "qcond/conductivity.hpp"
#include "qcond/fe_assembly.hpp"
#include "qcond/mesh.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace qcond {

using PointFunction = std::function<double(const Vec2&)>;

struct NewtonOptions {
  double rel_tol = 1e-10;
  int max_iters = 50;
  int max_halvings = 30;
  /// One extra Newton step after the tolerance is met (drives the residual to
  /// round-off, which difference quotients of solutions rely on).
  bool polish = true;
};

struct DiscreteSolution {
  std::shared_ptr<const Mesh> mesh;
  Vec u;  // nodal values
  Vec f;  // boundary data in boundary-loop order
  int newton_iters = 0;
  double residual_norm = 0.0;  // relative, infinity norm over interior nodes
  std::vector<double> residual_history;
  bool converged = false;
  std::string message;
};

/// Outward flux density a(u, grad u) du/dnu per unit boundary arclength.
struct FluxDensity {
  Vec nodal;  // one value per boundary vertex (loop order)
  /// Edge k joins boundary vertices k and k+1.
  [[nodiscard]] Vec edge_values() const;
  /// Integral over the boundary with the lumped boundary mass.
  [[nodiscard]] double total(const Mesh& mesh) const;
};

struct BoundaryJetEstimate {
  double s = 0.0;
  Vec2 p = Vec2::Zero();
  double p_tau = 0.0;
  double p_nu = 0.0;  // outward normal derivative
  double flux = 0.0;
  bool ok = true;
};

class ForwardSolver {
 public:
  ForwardSolver(ConductivitySpec cond, std::shared_ptr<const Mesh> mesh, NewtonOptions opts = {});

  /// Solves with boundary data f (loop order). `initial` is a nodal warm
  /// start; the default is the discrete harmonic extension of f. `source`
  /// switches to the forced problem div(a grad u) = source.
  [[nodiscard]] DiscreteSolution solve(const Vec& f, const Vec* initial = nullptr,
                                       const PointFunction* source = nullptr) const;

  /// Galerkin residual sum_T |T| a grad u . grad phi_k (+ load) at every vertex.
  [[nodiscard]] Vec residual(const Vec& u, const Vec* load = nullptr) const;
  /// Exact Newton Jacobian of `residual` (all four blocks).
  [[nodiscard]] BlockSystem jacobian(const Vec& u) const;
  [[nodiscard]] Vec harmonic_extension(const Vec& f) const;
  /// Load vector of a source term (edge-midpoint quadrature).
  [[nodiscard]] Vec load_vector(const PointFunction& source) const;

  [[nodiscard]] FluxDensity dn_map(const DiscreteSolution& sol, const PointFunction* source = nullptr) const;
  [[nodiscard]] BoundaryJetEstimate boundary_jet_of(const DiscreteSolution& sol,
                                                    const BoundaryFrame& frame) const;

  [[nodiscard]] const ConductivitySpec& conductivity() const { return cond_; }
  [[nodiscard]] const Mesh& mesh() const { return pattern_.mesh(); }
  [[nodiscard]] const std::shared_ptr<const Mesh>& mesh_ptr() const { return pattern_.mesh_ptr(); }
  [[nodiscard]] const BlockPattern& pattern() const { return pattern_; }
  [[nodiscard]] const NewtonOptions& options() const { return opts_; }

 private:
  [[nodiscard]] double residual_scale(const Vec& u, const Vec* load) const;

  ConductivitySpec cond_;
  BlockPattern pattern_;
  NewtonOptions opts_;
  BlockSystem laplace_;
  InteriorSolver laplace_solver_;
};

/// Boundary data sampled at the boundary vertices (loop order).
[[nodiscard]] Vec sample_boundary(const Mesh& mesh, const PointFunction& f);

[[nodiscard]] DiscreteSolution solve_dirichlet(const ConductivitySpec& cond,
                                               std::shared_ptr<const Mesh> mesh,
                                               const PointFunction& f, NewtonOptions opts = {});
[[nodiscard]] FluxDensity dn_map(const ConductivitySpec& cond, const DiscreteSolution& sol);
[[nodiscard]] BoundaryJetEstimate boundary_jet_of(const ConductivitySpec& cond,
                                                  const DiscreteSolution& sol,
                                                  const BoundaryFrame& frame);

/// Tangential derivative of boundary data at boundary position k (quadratic
/// fit through the neighbouring boundary vertices).
[[nodiscard]] double tangential_derivative(const Mesh& mesh, const Vec& f, int k);

/// `u <vertex> <value>` lines.
void write_solution(std::ostream& os, const DiscreteSolution& sol);
/// `flux <edge> <value>` lines.
void write_flux(std::ostream& os, const FluxDensity& flux);

}  // namespace qcond
