#include "qcond/jets.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace qcond {

double Barrier::profile(double y) const {
  if (kind == BarrierKind::log) return -A * std::log1p(-y / A);
  return h * std::expm1(y / h);
}

double Barrier::profile_d1(double y) const {
  if (kind == BarrierKind::log) return A / (A - y);
  return std::exp(y / h);
}

double Barrier::profile_d2(double y) const {
  if (kind == BarrierKind::log) return A / ((A - y) * (A - y));
  return std::exp(y / h) / h;
}

double Barrier::value(const Vec2& y) const { return s + p.x() * y.x() + p.y() * profile(y.y()); }

Vec2 Barrier::gradient(const Vec2& y) const { return {p.x(), p.y() * profile_d1(y.y())}; }

Mat2 Barrier::hessian(const Vec2& y) const {
  Mat2 H = Mat2::Zero();
  H(1, 1) = p.y() * profile_d2(y.y());
  return H;
}

Barrier log_barrier(double s, const Vec2& p, double A) {
  if (!(A > 0.0)) throw std::invalid_argument("log barrier needs A > 0");
  Barrier b;
  b.kind = BarrierKind::log;
  b.s = s;
  b.p = p;
  b.A = A;
  return b;
}

Barrier exp_barrier(double s, const Vec2& p, double C) {
  if (p.y() == 0.0) throw std::invalid_argument("exp barrier needs p_n != 0");
  if (!(C > 0.0)) throw std::invalid_argument("exp barrier needs a positive decay constant");
  return exp_barrier_with_step(s, p, std::abs(p.y()) / (C * p.norm()));
}

Barrier exp_barrier_with_step(double s, const Vec2& p, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("exp barrier needs h > 0");
  Barrier b;
  b.kind = BarrierKind::exp;
  b.s = s;
  b.p = p;
  b.h = h;
  return b;
}

MarginReport verify_one_sided(const ConductivitySpec& cond, const Barrier& barrier,
                              const Mesh& mesh, const Isometry& iso) {
  const ConductivitySpec normalized = rotate_conductivity(cond, PMat(iso.R.transpose()));
  MarginReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  const double sign = barrier.p.y() > 0.0 ? 1.0 : -1.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Vec2 y = iso.apply_inverse(mesh.centroid(t));
    const Vec2 g = barrier.gradient(y);
    const Mat2 H = barrier.hessian(y);
    PVec gp(2);
    gp << g.x(), g.y();
    const ConductivityJet jet = normalized.evaluate(barrier.value(y), gp);
    const PMat aij = linearized_conductivity(jet, gp);
    const double expr = aij(0, 0) * H(0, 0) + 2.0 * aij(0, 1) * H(0, 1) + aij(1, 1) * H(1, 1) +
                        jet.a_s * g.squaredNorm();
    const double margin = barrier.p.y() == 0.0 ? -std::abs(expr) : sign * expr;
    if (margin < rep.min_margin) {
      rep.min_margin = margin;
      rep.worst_point = y;
    }
    ++rep.evaluated;
  }
  return rep;
}

double discrete_c2_norm(const Mesh& mesh, const Vec& g) {
  const int nb = mesh.num_boundary();
  const auto& bv = mesh.boundary_vertices();
  double mx = 0.0;
  for (int k = 0; k < nb; ++k) {
    const int kp = (k + 1) % nb, km = (k + nb - 1) % nb;
    const double lp = (mesh.vertices()[bv[kp]] - mesh.vertices()[bv[k]]).norm();
    const double lm = (mesh.vertices()[bv[k]] - mesh.vertices()[bv[km]]).norm();
    const double d1 = (g[kp] - g[k]) / lp;
    const double d2 = 2.0 * ((g[kp] - g[k]) / lp - (g[k] - g[km]) / lm) / (lp + lm);
    mx = std::max({mx, std::abs(g[k]), std::abs(d1), std::abs(d2)});
  }
  return mx;
}

namespace {

struct Family {
  const Mesh* mesh = nullptr;
  Isometry iso;
  double s = 0.0;
  double p_tan = 0.0;
  Barrier shape;  // p = (0, 1): the normal profile only

  [[nodiscard]] Vec trace(double t) const {
    Vec f(mesh->num_boundary());
    for (int k = 0; k < mesh->num_boundary(); ++k) {
      const Vec2 y = iso.apply_inverse(mesh->vertices()[mesh->boundary_vertices()[k]]);
      f[k] = s + p_tan * y.x() + t * shape.profile(std::max(y.y(), 0.0));
    }
    return f;
  }
};

}  // namespace

JetResult prescribe_jet(const ForwardSolver& solver, const JetRequest& req, const JetOptions& opts) {
  const Mesh& m = solver.mesh();
  const ConductivitySpec& cond = solver.conductivity();
  JetResult res;
  res.tol_jet = opts.tol_jet_factor * (1.0 + req.p.norm());
  res.pi1 = opts.radius.pi1(req.s);

  JetRadiusOptions ropts = opts.radius;
  ropts.regime = req.regime;
  res.radius = jet_radius(cond, req.s, m.diameter(), ropts);

  const Isometry iso = normalize_above_origin(m, req.frame);
  const Vec2 pn = iso.rotate_inverse(req.p);
  const double target = pn.y();

  Family fam;
  fam.mesh = &m;
  fam.iso = iso;
  fam.s = req.s;
  fam.p_tan = pn.x();

  double T = 0.0;
  if (req.regime == Regime::small) {
    if (!(req.p.norm() < res.radius.pi)) {
      res.message = "requested |p| is not below Pi(s)";
      return res;
    }
    T = res.radius.B1;
    fam.shape = log_barrier(req.s, Vec2(0.0, 1.0), res.radius.A);
  } else {
    if (!cond.decay_constant() || !(*cond.decay_constant() > 0.0)) {
      res.message = "decay regime needs a positive decay constant";
      return res;
    }
    T = std::max(opts.decay_bracket * (1.0 + req.p.norm()), 2.0 * std::abs(target));
    fam.shape = exp_barrier(req.s, Vec2(pn.x(), T), *cond.decay_constant());
  }

  const Vec* warm = nullptr;
  Vec warm_u;
  double warm_t = 0.0;
  auto measure = [&](double t, double& slope) -> bool {
    Vec f = fam.trace(t);
    DiscreteSolution sol = solver.solve(f, warm);
    ++res.solves;
    if (!sol.converged) {
      res.message = "forward solve failed at t=" + std::to_string(t) + ": " + sol.message;
      return false;
    }
    const BoundaryJetEstimate est = solver.boundary_jet_of(sol, req.frame);
    slope = -est.p_nu;
    if (!warm || std::abs(t - target) < std::abs(warm_t - target)) {
      warm_u = sol.u;
      warm = &warm_u;
      warm_t = t;
    }
    res.f = std::move(f);
    res.solution = std::move(sol);
    res.achieved = est;
    res.t = t;
    return est.ok;
  };

  const double stop = 0.05 * res.tol_jet;
  double g0 = 0.0;
  if (!measure(target, g0)) return res;
  g0 -= target;

  double lo = -T, hi = T, glo = 0.0, ghi = 0.0;
  if (std::abs(g0) > stop) {
    if (!measure(lo, glo) || !measure(hi, ghi)) return res;
    glo -= target;
    ghi -= target;
    for (int e = 0; e < opts.max_expansions && (glo > 0.0 || ghi < 0.0); ++e) {
      if (glo > 0.0) {
        lo *= 2.0;
        if (!measure(lo, glo)) return res;
        glo -= target;
      } else {
        hi *= 2.0;
        if (!measure(hi, ghi)) return res;
        ghi -= target;
      }
    }
    res.bracket_lo = lo;
    res.bracket_hi = hi;
    res.achieved_lo = glo + target;
    res.achieved_hi = ghi + target;
    if (glo > 0.0 || ghi < 0.0) {
      res.message = "target normal slope outside achievable interval [" +
                    std::to_string(res.achieved_lo) + ", " + std::to_string(res.achieved_hi) + "]";
      return res;
    }
    // shrink the bracket with the initial probe
    if (g0 < 0.0 && target > lo) {
      lo = target;
      glo = g0;
    } else if (g0 > 0.0 && target < hi) {
      hi = target;
      ghi = g0;
    }

    // Illinois false position
    int side = 0;
    double gt = g0;
    for (int it = 0; it < opts.max_iters; ++it) {
      const double t = (lo * ghi - hi * glo) / (ghi - glo);
      if (!measure(t, gt)) return res;
      gt -= target;
      if (std::abs(gt) <= stop || hi - lo <= 1e-14 * (1.0 + T)) break;
      if (gt < 0.0) {
        lo = t;
        glo = gt;
        if (side == -1) ghi *= 0.5;
        side = -1;
      } else {
        hi = t;
        ghi = gt;
        if (side == 1) glo *= 0.5;
        side = 1;
      }
    }
  } else {
    res.bracket_lo = res.bracket_hi = target;
    res.achieved_lo = res.achieved_hi = g0 + target;
  }

  const double ds = res.achieved.s - req.s;
  res.jet_error = std::sqrt(ds * ds + (res.achieved.p - req.p).squaredNorm());
  Vec centered = res.f.array() - req.s;
  res.c2_surrogate = discrete_c2_norm(m, centered);
  res.ok = res.jet_error <= res.tol_jet;
  if (!res.ok && res.message.empty())
    res.message = "achieved jet error " + std::to_string(res.jet_error) + " exceeds tolerance";
  return res;
}

std::vector<JetLine> read_jet_batch(std::istream& is) {
  std::vector<JetLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    JetLine j;
    std::string regime;
    if (tag != "jet" || !(ls >> j.theta >> j.s >> j.p.x() >> j.p.y() >> regime))
      throw std::runtime_error("jet batch line " + std::to_string(lineno) + ": expected `jet theta s p1 p2 regime`");
    if (regime == "small") j.regime = Regime::small;
    else if (regime == "decay") j.regime = Regime::decay;
    else throw std::runtime_error("jet batch line " + std::to_string(lineno) + ": unknown regime " + regime);
    out.push_back(j);
  }
  return out;
}

}  // namespace qcond
