#pragma once

// Quasilinear conductivities a(s,p), their first derivatives, the linearized
// conductivity matrix and the structural bounds used by the barrier layer.

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcond {

inline constexpr int kMaxDim = 8;

/// Gradient-sized vector with inline storage (no heap traffic in assembly loops).
using PVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using PMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

class ConductivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConductivityJet {
  double a = 0.0;
  double a_s = 0.0;
  PVec grad_p;
};

/// Monotone bound function of |s| (lambda0 is non-increasing, mu0 non-decreasing).
using BoundFn = std::function<double(double)>;

/// Immutable description of a(s,p). Either analytic (value and derivatives in
/// closed form) or value-only with central finite differences of step
/// fd_scale * (1 + |p|).
class ConductivitySpec {
 public:
  using JetFn = std::function<ConductivityJet(double s, const PVec& p)>;
  using ValueFn = std::function<double(double s, const PVec& p)>;

  static ConductivitySpec analytic(std::string name, int dim, JetFn jet, BoundFn lambda0,
                                   BoundFn mu0,
                                   std::optional<double> decay_constant = std::nullopt);
  static ConductivitySpec finite_difference(std::string name, int dim, ValueFn value,
                                            BoundFn lambda0, BoundFn mu0,
                                            std::optional<double> decay_constant = std::nullopt,
                                            double fd_scale = 1e-4);

  /// (a, a_s, grad_p a). Throws ConductivityError on non-finite output.
  [[nodiscard]] ConductivityJet evaluate(double s, const PVec& p) const;
  [[nodiscard]] double value(double s, const PVec& p) const;

  [[nodiscard]] double lambda0(double abs_s) const { return lambda0_(abs_s); }
  [[nodiscard]] double mu0(double abs_s) const { return mu0_(abs_s); }
  [[nodiscard]] const std::optional<double>& decay_constant() const { return decay_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] bool uses_finite_differences() const { return !jet_; }
  [[nodiscard]] double fd_scale() const { return fd_scale_; }

  [[nodiscard]] ConductivitySpec with_decay_constant(std::optional<double> c) const;
  [[nodiscard]] ConductivitySpec with_bounds(BoundFn lambda0, BoundFn mu0) const;

 private:
  ConductivitySpec() = default;

  std::string name_;
  int dim_ = 2;
  JetFn jet_;
  ValueFn value_;
  BoundFn lambda0_;
  BoundFn mu0_;
  std::optional<double> decay_;
  double fd_scale_ = 1e-4;

  friend ConductivitySpec rotate_conductivity(const ConductivitySpec&, const PMat&);
};

/// a_ij = a delta_ij + (a_{p_i} p_j + a_{p_j} p_i) / 2
[[nodiscard]] PMat linearized_conductivity(const ConductivitySpec& cond, double s,
                                           const PVec& p);
[[nodiscard]] PMat linearized_conductivity(const ConductivityJet& jet, const PVec& p);

/// A_ij = (a_{p_j} u_i - a_{p_i} u_j) / 2
[[nodiscard]] PMat antisymmetric_part(const ConductivitySpec& cond, double s, const PVec& gradu);
[[nodiscard]] PMat antisymmetric_part(const ConductivityJet& jet, const PVec& gradu);

/// Smallest eigenvalue of the linearized conductivity.
[[nodiscard]] double ellipticity(const ConductivitySpec& cond, double s, const PVec& p);

struct ConditionCheck {
  std::string name;
  double margin = std::numeric_limits<double>::infinity();
  double worst_s = 0.0;
  PVec worst_p;
  bool evaluated = false;
  [[nodiscard]] bool passed() const { return !evaluated || margin >= -1e-12; }
};

struct ConditionReport {
  ConditionCheck coer_value;       // a >= 1
  ConditionCheck coer_ellipticity; // lambda(s,p) >= lambda0(|s|)
  ConditionCheck grow_flux;        // |p||grad_p a| + |a| <= mu0
  ConditionCheck grow_s;           // (1+|p|)|a_s| <= mu0 |p|
  ConditionCheck decay;            // |a_s| <= C lambda / |p|
  ConditionCheck uniform;          // lambda >= lambda0 (constant)
  std::size_t samples = 0;

  [[nodiscard]] bool coercive() const { return coer_value.passed() && coer_ellipticity.passed(); }
  [[nodiscard]] bool growth() const { return grow_flux.passed() && grow_s.passed(); }
  [[nodiscard]] bool decay_regime() const {
    return decay.evaluated && decay.passed() && uniform.passed();
  }
  [[nodiscard]] bool passed() const { return coercive() && growth() && decay.passed() && uniform.passed(); }
  [[nodiscard]] std::vector<const ConditionCheck*> checks() const {
    return {&coer_value, &coer_ellipticity, &grow_flux, &grow_s, &decay, &uniform};
  }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Dense grid scan: s uniform in s_range, |p| uniform in p_range, directions
/// spread over the sphere (polar grid in 2D).
[[nodiscard]] ConditionReport check_structural_conditions(const ConductivitySpec& cond,
                                                          Range s_range, Range p_range,
                                                          int grid_density);

enum class Regime { small, decay };

struct JetRadiusOptions {
  std::function<double(double)> pi1 = [](double) { return 1.0; };
  double big_n = 10.0;
  Regime regime = Regime::small;
};

struct JetRadius {
  double A = 0.0;
  double U = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double B1 = 0.0;
  double B2 = 0.0;
  double pi = 0.0;  // +inf in the decay regime
};

[[nodiscard]] JetRadius jet_radius(const ConductivitySpec& cond, double s, double domain_diam,
                                   const JetRadiusOptions& opts = {});

/// (R_* a)(s,p) = a(s, R^{-1} p). R must be orthogonal to 1e-12.
[[nodiscard]] ConductivitySpec rotate_conductivity(const ConductivitySpec& cond, const PMat& R);

// Presets, selectable by name: "constant(c)", "s_gaussian(amp)",
// "gaussian_p(amp)", "isotropic(delta)",
// "isotropic_bump(delta,bump,r0)", "oscillating(C)", "saturating(c,eps,C)",
// "affine_p1(c)", "s_square()".
[[nodiscard]] ConductivitySpec make_preset(const std::string& spec_text, int dim = 2);
[[nodiscard]] std::vector<std::string> preset_names();

}  // namespace qcond
