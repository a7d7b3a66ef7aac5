#pragma once

// Boundary data attaining a prescribed boundary jet: log and exp barriers on
// the normalized domain and the scalar search over the barrier's normal slope.

#include "qcond/conductivity.hpp"
#include "qcond/forward_solver.hpp"
#include "qcond/mesh.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace qcond {

enum class BarrierKind { log, exp };

/// u(y) = s + p'.y1 + p_n * phi(y2) in normalized coordinates (domain in y2 >= 0).
///   log: phi(y) = -A log(1 - y/A)
///   exp: phi(y) = h (e^{y/h} - 1)
struct Barrier {
  BarrierKind kind = BarrierKind::log;
  double s = 0.0;
  Vec2 p = Vec2::Zero();  // (p', p_n), normalized coordinates
  double A = 0.0;
  double h = 0.0;

  [[nodiscard]] double profile(double y) const;
  [[nodiscard]] double profile_d1(double y) const;
  [[nodiscard]] double profile_d2(double y) const;

  [[nodiscard]] double value(const Vec2& y) const;
  [[nodiscard]] Vec2 gradient(const Vec2& y) const;
  [[nodiscard]] Mat2 hessian(const Vec2& y) const;
};

[[nodiscard]] Barrier log_barrier(double s, const Vec2& p, double A);
/// h = |p_n| / (C |p|), the largest step satisfying |p_n|/h >= C|p|.
/// Throws std::invalid_argument if p_n = 0 or C <= 0.
[[nodiscard]] Barrier exp_barrier(double s, const Vec2& p, double C);
[[nodiscard]] Barrier exp_barrier_with_step(double s, const Vec2& p, double h);

struct MarginReport {
  double min_margin = 0.0;
  Vec2 worst_point = Vec2::Zero();  // normalized coordinates
  int evaluated = 0;
  [[nodiscard]] bool valid(double slack = 1e-10) const { return min_margin >= -slack; }
};

/// sign(p_n) (a_ij u_ij + a_s |grad u|^2) at every triangle barycenter of the
/// normalized mesh, with the conductivity pushed forward by the isometry.
[[nodiscard]] MarginReport verify_one_sided(const ConductivitySpec& cond, const Barrier& barrier,
                                            const Mesh& mesh, const Isometry& iso);

struct JetRequest {
  BoundaryFrame frame;
  double s = 0.0;
  Vec2 p = Vec2::Zero();  // original coordinates
  Regime regime = Regime::small;
};

struct JetOptions {
  JetRadiusOptions radius;
  double tol_jet_factor = 1e-3;  // tol_jet = factor (1 + |p|)
  int max_iters = 40;
  /// Normal-slope bracket half width in the decay regime (scaled by 1 + |p|).
  double decay_bracket = 1.0;
  /// Bracket doublings allowed when the target lies outside the initial bracket.
  int max_expansions = 6;
  NewtonOptions newton;
};

struct JetResult {
  bool ok = false;
  std::string message;
  Vec f;                    // boundary data, loop order
  DiscreteSolution solution;
  BoundaryJetEstimate achieved;
  double jet_error = 0.0;   // |(s,p)_achieved - (s,p)_requested|
  double tol_jet = 0.0;
  double t = 0.0;           // normal-slope parameter of the returned data
  double bracket_lo = 0.0, bracket_hi = 0.0;                 // parameter bracket
  double achieved_lo = 0.0, achieved_hi = 0.0;               // inward slopes at the ends
  int solves = 0;
  double c2_surrogate = 0.0;  // discrete C^2 norm of f - s
  double pi1 = 0.0;
  JetRadius radius;
};

/// Searches the barrier-trace family f_t for the member whose solution has
/// the requested normal derivative at the frame point.
[[nodiscard]] JetResult prescribe_jet(const ForwardSolver& solver, const JetRequest& request,
                                      const JetOptions& opts = {});

/// max over the boundary loop of |g|, |first|, |second divided differences|.
[[nodiscard]] double discrete_c2_norm(const Mesh& mesh, const Vec& g);

/// `jet theta s p1 p2 regime` lines; blank lines and `#` comments skipped.
struct JetLine {
  double theta = 0.0;
  double s = 0.0;
  Vec2 p = Vec2::Zero();
  Regime regime = Regime::small;
};
[[nodiscard]] std::vector<JetLine> read_jet_batch(std::istream& is);

}  // namespace qcond
