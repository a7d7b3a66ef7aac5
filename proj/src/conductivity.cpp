#include "qcond/conductivity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace qcond {

namespace {

void require_finite(const ConductivityJet& jet, const std::string& name) {
  bool ok = std::isfinite(jet.a) && std::isfinite(jet.a_s);
  for (int i = 0; i < jet.grad_p.size(); ++i) ok = ok && std::isfinite(jet.grad_p[i]);
  if (!ok) throw ConductivityError("conductivity '" + name + "' produced a non-finite value");
}

PVec zeros(int n) { return PVec::Zero(n); }

}  // namespace

ConductivitySpec ConductivitySpec::analytic(std::string name, int dim, JetFn jet, BoundFn lambda0,
                                            BoundFn mu0, std::optional<double> decay_constant) {
  if (dim < 2 || dim > kMaxDim) throw std::invalid_argument("conductivity dimension out of range");
  ConductivitySpec c;
  c.name_ = std::move(name);
  c.dim_ = dim;
  c.jet_ = std::move(jet);
  c.lambda0_ = std::move(lambda0);
  c.mu0_ = std::move(mu0);
  c.decay_ = decay_constant;
  return c;
}

ConductivitySpec ConductivitySpec::finite_difference(std::string name, int dim, ValueFn value,
                                                     BoundFn lambda0, BoundFn mu0,
                                                     std::optional<double> decay_constant,
                                                     double fd_scale) {
  if (dim < 2 || dim > kMaxDim) throw std::invalid_argument("conductivity dimension out of range");
  if (!(fd_scale > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  ConductivitySpec c;
  c.name_ = std::move(name);
  c.dim_ = dim;
  c.value_ = std::move(value);
  c.lambda0_ = std::move(lambda0);
  c.mu0_ = std::move(mu0);
  c.decay_ = decay_constant;
  c.fd_scale_ = fd_scale;
  return c;
}

ConductivityJet ConductivitySpec::evaluate(double s, const PVec& p) const {
  if (p.size() != dim_) throw std::invalid_argument("gradient dimension mismatch");
  ConductivityJet out;
  if (jet_) {
    out = jet_(s, p);
  } else {
    // central differences, O(step^2)
    out.a = value_(s, p);
    const double hs = fd_scale_ * (1.0 + std::abs(s));
    out.a_s = (value_(s + hs, p) - value_(s - hs, p)) / (2.0 * hs);
    const double hp = fd_scale_ * (1.0 + p.norm());
    out.grad_p = zeros(dim_);
    PVec q = p;
    for (int i = 0; i < dim_; ++i) {
      q[i] = p[i] + hp;
      const double up = value_(s, q);
      q[i] = p[i] - hp;
      const double dn = value_(s, q);
      q[i] = p[i];
      out.grad_p[i] = (up - dn) / (2.0 * hp);
    }
  }
  require_finite(out, name_);
  return out;
}

double ConductivitySpec::value(double s, const PVec& p) const {
  const double v = jet_ ? jet_(s, p).a : value_(s, p);
  if (!std::isfinite(v)) throw ConductivityError("conductivity '" + name_ + "' produced a non-finite value");
  return v;
}

ConductivitySpec ConductivitySpec::with_decay_constant(std::optional<double> c) const {
  ConductivitySpec copy = *this;
  copy.decay_ = c;
  return copy;
}

ConductivitySpec ConductivitySpec::with_bounds(BoundFn lambda0, BoundFn mu0) const {
  ConductivitySpec copy = *this;
  copy.lambda0_ = std::move(lambda0);
  copy.mu0_ = std::move(mu0);
  return copy;
}

PMat linearized_conductivity(const ConductivityJet& jet, const PVec& p) {
  const int n = static_cast<int>(p.size());
  PMat m = jet.a * PMat::Identity(n, n);
  m += 0.5 * (jet.grad_p * p.transpose() + p * jet.grad_p.transpose());
  return m;
}

PMat linearized_conductivity(const ConductivitySpec& cond, double s, const PVec& p) {
  return linearized_conductivity(cond.evaluate(s, p), p);
}

PMat antisymmetric_part(const ConductivityJet& jet, const PVec& gradu) {
  // A_ij = (a_{p_j} u_i - a_{p_i} u_j) / 2
  return 0.5 * (gradu * jet.grad_p.transpose() - jet.grad_p * gradu.transpose());
}

PMat antisymmetric_part(const ConductivitySpec& cond, double s, const PVec& gradu) {
  return antisymmetric_part(cond.evaluate(s, gradu), gradu);
}

namespace {

double min_eigenvalue(const PMat& m) {
  if (m.rows() == 2) {
    const double tr = m(0, 0) + m(1, 1);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    return 0.5 * tr - disc;
  }
  Eigen::SelfAdjointEigenSolver<PMat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

std::vector<PVec> sample_directions(int n, int density) {
  std::vector<PVec> dirs;
  if (n == 2) {
    const int k = std::max(4, density);
    for (int i = 0; i < k; ++i) {
      const double t = 2.0 * M_PI * i / k;
      PVec d(2);
      d << std::cos(t), std::sin(t);
      dirs.push_back(d);
    }
    return dirs;
  }
  for (int i = 0; i < n; ++i) {
    for (double sign : {1.0, -1.0}) {
      PVec d = PVec::Zero(n);
      d[i] = sign;
      dirs.push_back(d);
    }
    for (int j = i + 1; j < n; ++j) {
      for (double sign : {1.0, -1.0}) {
        PVec d = PVec::Zero(n);
        d[i] = M_SQRT1_2;
        d[j] = sign * M_SQRT1_2;
        dirs.push_back(d);
      }
    }
  }
  return dirs;
}

void record(ConditionCheck& check, double margin, double s, const PVec& p) {
  check.evaluated = true;
  if (margin < check.margin) {
    check.margin = margin;
    check.worst_s = s;
    check.worst_p = p;
  }
}

}  // namespace

double ellipticity(const ConductivitySpec& cond, double s, const PVec& p) {
  return min_eigenvalue(linearized_conductivity(cond, s, p));
}

ConditionReport check_structural_conditions(const ConductivitySpec& cond, Range s_range,
                                            Range p_range, int grid_density) {
  if (grid_density < 2 || s_range.hi < s_range.lo || p_range.hi < p_range.lo || p_range.lo < 0.0)
    throw std::invalid_argument("structural check needs non-empty ranges and density >= 2");

  ConditionReport rep;
  rep.coer_value.name = "coer: a >= 1";
  rep.coer_ellipticity.name = "coer: lambda >= lambda0(|s|)";
  rep.grow_flux.name = "grow: |p||grad_p a| + |a| <= mu0(|s|)";
  rep.grow_s.name = "grow: (1+|p|)|a_s| <= mu0(|s|)|p|";
  rep.decay.name = "decay1: |a_s| <= C lambda/|p|";
  rep.uniform.name = "uni: lambda >= lambda0";

  const int n = cond.dim();
  const auto dirs = sample_directions(n, grid_density);
  const double max_abs_s = std::max(std::abs(s_range.lo), std::abs(s_range.hi));
  const double lambda_uniform = cond.lambda0(max_abs_s);

  for (int is = 0; is < grid_density; ++is) {
    const double s = s_range.lo + (s_range.hi - s_range.lo) * is / (grid_density - 1);
    const double l0 = cond.lambda0(std::abs(s));
    const double m0 = cond.mu0(std::abs(s));
    for (int ir = 0; ir < grid_density; ++ir) {
      const double r = p_range.lo + (p_range.hi - p_range.lo) * ir / (grid_density - 1);
      for (const auto& d : dirs) {
        const PVec p = r * d;
        const ConductivityJet jet = cond.evaluate(s, p);
        const double lam = min_eigenvalue(linearized_conductivity(jet, p));
        ++rep.samples;
        record(rep.coer_value, jet.a - 1.0, s, p);
        record(rep.coer_ellipticity, lam - l0, s, p);
        record(rep.grow_flux, m0 - (r * jet.grad_p.norm() + std::abs(jet.a)), s, p);
        record(rep.grow_s, m0 * r - (1.0 + r) * std::abs(jet.a_s), s, p);
        if (cond.decay_constant()) {
          record(rep.uniform, lam - lambda_uniform, s, p);
          if (r > 0.0) record(rep.decay, *cond.decay_constant() * lam / r - std::abs(jet.a_s), s, p);
        }
        if (r == 0.0) break;  // every direction gives the same sample
      }
    }
  }
  return rep;
}

JetRadius jet_radius(const ConductivitySpec& cond, double s, double domain_diam,
                     const JetRadiusOptions& opts) {
  if (!(domain_diam > 0.0)) throw std::invalid_argument("domain diameter must be positive");
  JetRadius jr;
  jr.A = 2.0 * domain_diam;
  // |u^{s,p}| <= |s| + 2A over the normalized domain once max(|p'|,|p_n|) <= 1
  jr.U = std::abs(s) + 2.0 * jr.A;
  const double l0 = cond.lambda0(jr.U);
  const double m0 = cond.mu0(jr.U);
  jr.C1 = std::min(l0 / (2.0 * m0), 1.0);
  jr.C2 = std::min(2.0 * l0 / (jr.A * jr.A * m0), 1.0);
  jr.B1 = std::min(jr.C1, opts.pi1(s) / (opts.big_n * domain_diam));
  jr.B2 = jr.C2;
  jr.pi = std::min(std::sqrt(jr.B1 * jr.B2), jr.B1);
  if (opts.regime == Regime::decay) jr.pi = std::numeric_limits<double>::infinity();
  return jr;
}

ConductivitySpec rotate_conductivity(const ConductivitySpec& cond, const PMat& R) {
  const int n = cond.dim();
  if (R.rows() != n || R.cols() != n) throw std::invalid_argument("rotation dimension mismatch");
  const double defect = (R.transpose() * R - PMat::Identity(n, n)).cwiseAbs().maxCoeff();
  if (defect > 1e-12) throw std::invalid_argument("rotation matrix is not orthogonal");

  ConductivitySpec out = cond;
  out.name_ = cond.name_ + "@rotated";
  const PMat Rt = R.transpose();
  if (cond.jet_) {
    auto inner = cond.jet_;
    out.jet_ = [inner, R, Rt](double s, const PVec& p) {
      ConductivityJet j = inner(s, Rt * p);
      j.grad_p = R * j.grad_p;  // chain rule through p -> R^T p
      return j;
    };
  } else {
    auto inner = cond.value_;
    out.value_ = [inner, Rt](double s, const PVec& p) { return inner(s, Rt * p); };
  }
  return out;
}

// ---------------------------------------------------------------------------
// presets

namespace {

BoundFn constant_bound(double v) {
  return [v](double) { return v; };
}

// C-infinity step: 0 for x <= 0, exp(-1/x) otherwise.
double smooth_step(double x) { return x <= 0.0 ? 0.0 : std::exp(-1.0 / x); }
double smooth_step_d(double x) { return x <= 0.0 ? 0.0 : std::exp(-1.0 / x) / (x * x); }

ConductivitySpec radial(std::string name, int dim,
                        std::function<void(double s, double r, double& a, double& a_s, double& a_r)> f,
                        BoundFn l0, BoundFn m0, std::optional<double> decay = std::nullopt) {
  auto jet = [f](double s, const PVec& p) {
    ConductivityJet j;
    const double r = p.norm();
    double a_r = 0.0;
    f(s, r, j.a, j.a_s, a_r);
    j.grad_p = r > 0.0 ? PVec(a_r * p / r) : PVec(PVec::Zero(p.size()));
    return j;
  };
  return ConductivitySpec::analytic(std::move(name), dim, jet, std::move(l0), std::move(m0), decay);
}

struct ParsedPreset {
  std::string name;
  std::vector<double> args;
};

ParsedPreset parse_preset(const std::string& text) {
  ParsedPreset out;
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  if (open == std::string::npos) {
    out.name = trim(text);
    return out;
  }
  if (close == std::string::npos || close < open)
    throw std::invalid_argument("malformed conductivity preset: " + text);
  out.name = trim(text.substr(0, open));
  std::stringstream ss(text.substr(open + 1, close - open - 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.args.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad numeric argument '" + item + "' in preset " + text);
    }
  }
  return out;
}

double arg(const ParsedPreset& p, std::size_t i, double fallback) {
  return i < p.args.size() ? p.args[i] : fallback;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"constant", "s_gaussian", "gaussian_p", "isotropic", "isotropic_bump",
          "oscillating", "saturating", "affine_p1", "s_square"};
}

ConductivitySpec make_preset(const std::string& spec_text, int dim) {
  const ParsedPreset pp = parse_preset(spec_text);
  const std::string& nm = pp.name;

  if (nm == "constant") {
    const double c = arg(pp, 0, 1.0);
    return ConductivitySpec::analytic(
        spec_text, dim,
        [c](double, const PVec& p) { return ConductivityJet{c, 0.0, PVec::Zero(p.size())}; },
        constant_bound(c), constant_bound(c));
  }
  if (nm == "s_gaussian") {
    // 1 + amp e^{-s^2}
    const double amp = arg(pp, 0, 0.25);
    return ConductivitySpec::analytic(
        spec_text, dim,
        [amp](double s, const PVec& p) {
          const double e = std::exp(-s * s);
          return ConductivityJet{1.0 + amp * e, -2.0 * amp * s * e, PVec::Zero(p.size())};
        },
        constant_bound(1.0), constant_bound(1.0 + std::abs(amp)));
  }
  if (nm == "gaussian_p") {
    // 1 + amp e^{-|p|^2}; lambda attains its minimum 1 - 2 amp e^{-3/2} at |p|^2 = 3/2
    const double amp = arg(pp, 0, 0.25);
    const double l0 = std::min(1.0, 1.0 - 2.0 * amp * std::exp(-1.5));
    const double m0 = 1.0 + 2.0 * amp * std::exp(-0.5);
    return radial(
        spec_text, dim,
        [amp](double, double r, double& a, double& a_s, double& a_r) {
          const double e = std::exp(-r * r);
          a = 1.0 + amp * e;
          a_s = 0.0;
          a_r = -2.0 * amp * r * e;
        },
        constant_bound(l0), constant_bound(m0));
  }
  if (nm == "isotropic") {
    // 1 + delta / (1 + |p|^2)
    const double delta = arg(pp, 0, 0.2);
    const double l0 = std::min(1.0, 1.0 - delta / 8.0);
    const double m0 = 1.0 + 1.5 * std::abs(delta);
    return radial(
        spec_text, dim,
        [delta](double, double r, double& a, double& a_s, double& a_r) {
          const double q = 1.0 + r * r;
          a = 1.0 + delta / q;
          a_s = 0.0;
          a_r = -2.0 * delta * r / (q * q);
        },
        constant_bound(l0), constant_bound(m0));
  }
  if (nm == "isotropic_bump") {
    // isotropic(delta) plus bump * step((|p| - r0)/r0); identical to isotropic(delta) on |p| <= r0
    const double delta = arg(pp, 0, 0.2);
    const double bump = arg(pp, 1, 0.3);
    const double r0 = arg(pp, 2, 0.1);
    if (!(r0 > 0.0) || bump < 0.0) throw std::invalid_argument("isotropic_bump needs r0 > 0, bump >= 0");
    const double l0 = std::min(1.0, 1.0 - delta / 8.0);
    const double m0 = 1.0 + 1.5 * std::abs(delta) + 2.0 * bump;
    return radial(
        spec_text, dim,
        [delta, bump, r0](double, double r, double& a, double& a_s, double& a_r) {
          const double q = 1.0 + r * r;
          const double x = (r - r0) / r0;
          a = 1.0 + delta / q + bump * smooth_step(x);
          a_s = 0.0;
          a_r = -2.0 * delta * r / (q * q) + bump * smooth_step_d(x) / r0;
        },
        constant_bound(l0), constant_bound(m0));
  }
  if (nm == "oscillating") {
    // 2 + sin(s) |p| / (1 + |p|)
    std::optional<double> c;
    if (!pp.args.empty()) c = pp.args[0];
    return radial(
        spec_text, dim,
        [](double s, double r, double& a, double& a_s, double& a_r) {
          const double q = 1.0 + r;
          a = 2.0 + std::sin(s) * r / q;
          a_s = std::cos(s) * r / q;
          a_r = std::sin(s) / (q * q);
        },
        constant_bound(1.0), constant_bound(3.25), c);
  }
  if (nm == "saturating") {
    // 1.1 + c t/(1+t) + eps tanh(s) t/(1+t)^2 with t = |p|^2. a_s vanishes at
    // p = 0 and |a_s||p| <= 0.33 eps, so (decay1) holds with C >= 0.33 eps / lambda0.
    const double c = arg(pp, 0, 0.5);
    const double eps = arg(pp, 1, 0.1);
    const double C = arg(pp, 2, 0.1);
    const double l0 = 1.1 - 0.4 * std::abs(eps);
    const double m0 = 1.1 + 1.5 * std::abs(c) + 0.5 * std::abs(eps);
    return radial(
        spec_text, dim,
        [c, eps](double s, double r, double& a, double& a_s, double& a_r) {
          const double t = r * r;
          const double q = 1.0 + t;
          const double th = std::tanh(s);
          a = 1.1 + c * t / q + eps * th * t / (q * q);
          a_s = eps * (1.0 - th * th) * t / (q * q);
          a_r = 2.0 * r * (c / (q * q) + eps * th * (1.0 - t) / (q * q * q));
        },
        constant_bound(l0), constant_bound(m0), C);
  }
  if (nm == "affine_p1") {
    // 1 + c p_1: not coercive for c p_1 < 0
    const double c = arg(pp, 0, 1.0);
    return ConductivitySpec::analytic(
        spec_text, dim,
        [c](double, const PVec& p) {
          PVec g = PVec::Zero(p.size());
          g[0] = c;
          return ConductivityJet{1.0 + c * p[0], 0.0, g};
        },
        constant_bound(0.5), constant_bound(2.0));
  }
  if (nm == "s_square") {
    return ConductivitySpec::analytic(
        spec_text, dim,
        [](double s, const PVec& p) { return ConductivityJet{1.0 + s * s, 2.0 * s, PVec::Zero(p.size())}; },
        constant_bound(1.0), [](double t) { return 1.0 + t * t + 2.0 * t; });
  }
  throw std::invalid_argument("unknown conductivity preset '" + nm + "'");
}

}  // namespace qcond
