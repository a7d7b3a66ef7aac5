#pragma once

// Boundary determination from the linearized DN map: oscillatory probes,
// symbol fits, the algebraic inversions and the end-to-end reconstruction.

#include "qcond/conductivity.hpp"
#include "qcond/jets.hpp"
#include "qcond/linearization.hpp"
#include "qcond/mesh.hpp"

#include <complex>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qcond {

using Complex = std::complex<double>;

/// Boundary residual of a linear DN map: flux density times the lumped
/// boundary weight, loop order.
using DnEvaluator = std::function<Vec(const Vec& h)>;

[[nodiscard]] DnEvaluator make_dn_evaluator(const LinearizedOperator& op);

/// DN map of d_i(M_ij v_j) on the mesh for a constant (not necessarily
/// symmetric) matrix M.
class ConstantCoefficientDn {
 public:
  ConstantCoefficientDn(std::shared_ptr<const Mesh> mesh, const Mat2& M);
  [[nodiscard]] Vec operator()(const Vec& h) const;

 private:
  BlockPattern pattern_;
  BlockSystem K_;
  InteriorSolver lu_;
};

/// Largest probe frequency with at least `nodes_per_wavelength` boundary nodes
/// per wavelength.
[[nodiscard]] double nyquist_limit(const Mesh& mesh, double nodes_per_wavelength = 10.0);

struct Probe {
  double tau = 0.0;
  double width = 0.0;  // support half-width in arclength
  Vec chi;             // real bump
  Vec re, im;          // chi cos(phase), chi sin(phase)
};

/// Smooth cutoff: 1 for |l| <= plateau * width, 0 for |l| >= width.
[[nodiscard]] double bump(double l, double width, double plateau);

/// h(x) = chi(arclength from x0) exp(i tau <x - x0, xi>), xi = xi_sign * tau_frame.
/// Throws std::invalid_argument above the Nyquist limit.
[[nodiscard]] Probe oscillatory_probe(const Mesh& mesh, const BoundaryFrame& frame, double xi_sign,
                                      double tau, double width, double plateau = 0.5,
                                      double nodes_per_wavelength = 10.0);

/// <Lambda h, conj h> / ||h||^2 with two real solves.
[[nodiscard]] Complex probe_pairing(const DnEvaluator& dn, const Mesh& mesh, const Probe& probe);

struct SymbolOptions {
  std::vector<double> tau_list;       // empty: default ladder
  double width_factor = 3.0;          // width = width_factor / sqrt(tau)
  double plateau = 0.3;
  double nodes_per_wavelength = 10.0;
  int ladder_points = 8;
  bool dispersion_term = true;        // c3 tau^3 in the real fit
  double fit_threshold = 0.05;        // relative rms misfit flagged above this
};

struct SymbolEstimate {
  BoundaryFrame frame;
  double s = 0.0;
  Vec2 p = Vec2::Zero();
  std::vector<double> tau_list;
  std::vector<Complex> pairing_plus, pairing_minus;
  double real_slope = 0.0;      // sqrt(det a_ij)
  double real_intercept = 0.0;
  double dispersion = 0.0;
  double imag_slope = 0.0;      // A_ij nu_i tau_j
  double imag_intercept = 0.0;
  double fit_residual = 0.0;    // relative rms
  double parity_residual = 0.0; // relative size of the wrong-parity parts
  bool reliable = false;
  std::string message;
};

/// Default ladder: ladder_points frequencies geometrically spaced over
/// [Nyquist / 3, Nyquist] (at most the nominal {8,...,64} 2 pi / perimeter).
[[nodiscard]] std::vector<double> default_tau_ladder(const Mesh& mesh, const SymbolOptions& opts);

[[nodiscard]] SymbolEstimate extract_symbol(const DnEvaluator& dn, const Mesh& mesh,
                                            const BoundaryFrame& frame, double s, const Vec2& p,
                                            const SymbolOptions& opts = {});

struct MeasuredInvariants {
  double det_est = 0.0;
  double antisym_est = 0.0;
};
[[nodiscard]] MeasuredInvariants measured_invariants(const SymbolEstimate& sym);

/// Eigenvalues of a I + (q p^T + p q^T)/2 in increasing order, n = dim(p).
[[nodiscard]] std::vector<double> spectrum_of_recovery_matrix(double a, const Eigen::VectorXd& q,
                                                              const Eigen::VectorXd& p);

struct TangentialRecovery {
  double a = 0.0;
  Eigen::VectorXd grad;  // q
  bool grad_recovered = true;
  double reassembly_residual = 0.0;
};
/// Inverts M = a I + (q p'^T + p' q^T)/2 for a and q.
[[nodiscard]] TangentialRecovery recover_from_tangential_matrix(const Eigen::MatrixXd& M,
                                                                const Eigen::VectorXd& p_prime);

/// Cumulative integral of samples on a uniform grid: 4th order (Simpson where
/// possible, cubic interpolation on the first interval).
[[nodiscard]] std::vector<double> cumulative_integral(const std::vector<double>& f, double dq);

struct RadialProfile {
  std::vector<double> radii;
  std::vector<double> a_hat;
  bool consistent = true;  // no negative integrand
};
/// a(s, r e) = (1/r) sqrt(int_0^r 2 q D(q) dq), a(0) = sqrt(D(0)), from D on a
/// uniform radius grid starting at 0.
[[nodiscard]] RadialProfile radial_integration_recovery(const std::vector<double>& radii,
                                                        const std::vector<double>& D);

struct RecoverySample {
  double s = 0.0;
  Vec2 p = Vec2::Zero();
  double a_hat = 0.0;
  std::optional<double> a_true;
  std::optional<double> rel_err;
  std::string status = "ok";
  double det_est = 0.0;
  double antisym_est = 0.0;
  double jet_error = 0.0;
};

struct RecoveryGrid {
  std::vector<RecoverySample> samples;
  std::vector<std::pair<double, double>> pi_profile;  // (s, Pi(s))
  std::vector<SymbolEstimate> symbols;
};

struct ReconstructionOptions {
  std::vector<double> s_grid{-1.0, -0.5, 0.0, 0.5, 1.0};
  int directions = 16;
  int radii = 8;
  double radius_fraction = 0.95;  // of Pi(s)
  /// Explicit radii (decay regime or overrides); when set, replaces the Pi-based grid.
  std::vector<double> radius_values;
  double radial_spacing = 1.0 / 17.0;  // maximal integration step
  Regime regime = Regime::small;
  JetOptions jet;
  SymbolOptions symbol;
  double condition_threshold = 1e12;
  int jobs = 1;
};

struct ReconstructionProgress {
  std::function<void(std::size_t done, std::size_t total)> callback;
};

/// Reconstructs a on the polar grid, using `solver` as the measurement
/// device; the conductivity inside the solver is used only to simulate data
/// and to fill a_true.
[[nodiscard]] RecoveryGrid reconstruct(const ForwardSolver& solver, const ReconstructionOptions& opts,
                                       const ReconstructionProgress* progress = nullptr);

/// `s,p1,p2,a_hat,a_true,rel_err,status`
void write_recovery_csv(std::ostream& os, const RecoveryGrid& grid);
/// Per-probe table of symbol fits.
void write_symbols_csv(std::ostream& os, const std::vector<SymbolEstimate>& symbols);

}  // namespace qcond
