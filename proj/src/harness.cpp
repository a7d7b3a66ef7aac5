#include "qcond/harness.hpp"

#include "qcond/forward_solver.hpp"
#include "qcond/geometry.hpp"
#include "qcond/jets.hpp"
#include "qcond/linearization.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace qcond {

ConfigError::ConfigError(int line, std::string key, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": key '" + key + "': " + what
                                  : "key '" + key + "': " + what),
      line_(line),
      key_(std::move(key)) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, int line, const std::string& key) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(line, key, "expected a number, got '" + v + "'");
  }
  if (pos != v.size() || !std::isfinite(x)) throw ConfigError(line, key, "expected a number, got '" + v + "'");
  return x;
}

int to_int(const std::string& v, int line, const std::string& key) {
  const double x = to_double(v, line, key);
  if (x != std::floor(x) || std::abs(x) > 1e9) throw ConfigError(line, key, "expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

std::vector<double> to_list(const std::string& v, int line, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(item, line, key));
  }
  return out;
}

Range to_range(const std::string& v, int line, const std::string& key) {
  const auto l = to_list(v, line, key);
  if (l.size() != 2 || l[0] > l[1]) throw ConfigError(line, key, "expected 'lo, hi' with lo <= hi");
  return {l[0], l[1]};
}

bool to_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(line, key, "expected true or false, got '" + v + "'");
}

void apply_key(RunConfig& c, const std::string& key, const std::string& v, int line) {
  if (key == "conductivity") {
    try {
      (void)make_preset(v);
    } catch (const std::exception& e) {
      throw ConfigError(line, key, e.what());
    }
    c.conductivity = v;
  } else if (key == "regime") {
    if (v == "small") c.regime = Regime::small;
    else if (v == "decay") c.regime = Regime::decay;
    else throw ConfigError(line, key, "expected small or decay, got '" + v + "'");
  } else if (key == "seed") {
    try {
      c.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw ConfigError(line, key, "expected an unsigned integer, got '" + v + "'");
    }
  } else if (key == "jobs") c.jobs = to_int(v, line, key);
  else if (key == "output" || key == "output_dir") c.output_dir = v;
  else if (key == "stages") {
    static const std::vector<std::string> known{"structural", "mesh", "forward", "linearization", "geometry",
                                                "reconstruction"};
    c.stages.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      if (std::find(known.begin(), known.end(), item) == known.end())
        throw ConfigError(line, key, "unknown stage '" + item + "'");
      c.stages.push_back(item);
    }
  } else if (key == "mesh.domain") {
    if (v != "disk" && v != "polygon") throw ConfigError(line, key, "expected disk or polygon, got '" + v + "'");
    c.domain = v;
  } else if (key == "mesh.radius") c.radius = to_double(v, line, key);
  else if (key == "mesh.sides") c.sides = to_int(v, line, key);
  else if (key == "mesh.h") c.h = to_double(v, line, key);
  else if (key == "grid.s") c.s_grid = to_list(v, line, key);
  else if (key == "grid.directions") c.directions = to_int(v, line, key);
  else if (key == "grid.radii") c.radii = to_int(v, line, key);
  else if (key == "grid.radius_fraction") c.radius_fraction = to_double(v, line, key);
  else if (key == "grid.radius_values") c.radius_values = to_list(v, line, key);
  else if (key == "grid.radial_spacing") c.radial_spacing = to_double(v, line, key);
  else if (key == "jet.pi1") c.pi1 = to_double(v, line, key);
  else if (key == "jet.big_n") c.big_n = to_double(v, line, key);
  else if (key == "jet.tol_factor") c.tol_jet_factor = to_double(v, line, key);
  else if (key == "jet.max_iters") c.jet_max_iters = to_int(v, line, key);
  else if (key == "symbol.tau") c.symbol.tau_list = to_list(v, line, key);
  else if (key == "symbol.width_factor") c.symbol.width_factor = to_double(v, line, key);
  else if (key == "symbol.plateau") c.symbol.plateau = to_double(v, line, key);
  else if (key == "symbol.nodes_per_wavelength") c.symbol.nodes_per_wavelength = to_double(v, line, key);
  else if (key == "symbol.ladder_points") c.symbol.ladder_points = to_int(v, line, key);
  else if (key == "symbol.dispersion_term") c.symbol.dispersion_term = to_bool(v, line, key);
  else if (key == "symbol.fit_threshold") c.symbol.fit_threshold = to_double(v, line, key);
  else if (key == "tolerances.newton_rel_tol") c.newton_rel_tol = to_double(v, line, key);
  else if (key == "tolerances.newton_max_iters") c.newton_max_iters = to_int(v, line, key);
  else if (key == "tolerances.condition_threshold") c.condition_threshold = to_double(v, line, key);
  else if (key == "tolerances.max_rel_err") c.max_rel_err = to_double(v, line, key);
  else if (key == "tolerances.median_rel_err") c.median_rel_err = to_double(v, line, key);
  else if (key == "checks.structural_s") c.structural_s = to_range(v, line, key);
  else if (key == "checks.structural_p") c.structural_p = to_range(v, line, key);
  else if (key == "checks.structural_density") c.structural_density = to_int(v, line, key);
  else if (key == "checks.convergence_h") c.convergence_h = to_list(v, line, key);
  else if (key == "checks.fd_t") c.fd_t = to_list(v, line, key);
  else if (key == "checks.comparison_pairs") c.comparison_pairs = to_int(v, line, key);
  else throw ConfigError(line, key, "unknown key");
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](double x, const char* key) {
    if (!(x > 0.0)) throw ConfigError(0, key, "must be positive");
  };
  positive(radius, "mesh.radius");
  positive(h, "mesh.h");
  if (!(h < radius)) throw ConfigError(0, "mesh.h", "must be smaller than mesh.radius");
  if (domain == "polygon" && sides < 3) throw ConfigError(0, "mesh.sides", "needs at least 3 sides");
  if (s_grid.empty()) throw ConfigError(0, "grid.s", "must be non-empty");
  if (directions < 1) throw ConfigError(0, "grid.directions", "must be at least 1");
  if (radii < 1) throw ConfigError(0, "grid.radii", "must be at least 1");
  if (!(radius_fraction > 0.0 && radius_fraction < 1.0)) throw ConfigError(0, "grid.radius_fraction", "must lie in (0, 1)");
  for (double r : radius_values) positive(r, "grid.radius_values");
  positive(radial_spacing, "grid.radial_spacing");
  positive(pi1, "jet.pi1");
  positive(big_n, "jet.big_n");
  positive(tol_jet_factor, "jet.tol_factor");
  if (jet_max_iters < 1) throw ConfigError(0, "jet.max_iters", "must be at least 1");
  for (double t : symbol.tau_list) positive(t, "symbol.tau");
  positive(symbol.width_factor, "symbol.width_factor");
  if (!(symbol.plateau >= 0.0 && symbol.plateau < 1.0)) throw ConfigError(0, "symbol.plateau", "must lie in [0, 1)");
  positive(symbol.nodes_per_wavelength, "symbol.nodes_per_wavelength");
  positive(symbol.fit_threshold, "symbol.fit_threshold");
  positive(newton_rel_tol, "tolerances.newton_rel_tol");
  if (newton_max_iters < 1) throw ConfigError(0, "tolerances.newton_max_iters", "must be at least 1");
  positive(condition_threshold, "tolerances.condition_threshold");
  positive(max_rel_err, "tolerances.max_rel_err");
  positive(median_rel_err, "tolerances.median_rel_err");
  if (structural_density < 2) throw ConfigError(0, "checks.structural_density", "must be at least 2");
  if (convergence_h.empty()) throw ConfigError(0, "checks.convergence_h", "must be non-empty");
  for (double x : convergence_h) positive(x, "checks.convergence_h");
  if (fd_t.empty()) throw ConfigError(0, "checks.fd_t", "must be non-empty");
  for (double x : fd_t) positive(x, "checks.fd_t");
  if (comparison_pairs < 0) throw ConfigError(0, "checks.comparison_pairs", "must be non-negative");
  if (jobs < 1) throw ConfigError(0, "jobs", "must be at least 1");
  if (stages.empty()) throw ConfigError(0, "stages", "must be non-empty");
  if (regime == Regime::decay && !make_preset(conductivity).decay_constant())
    throw ConfigError(0, "regime", "decay regime needs a conductivity with a decay constant");
}

RunConfig parse_config(std::istream& is) {
  RunConfig c;
  std::string raw, section;
  int line = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(line, text, "unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) throw ConfigError(line, text, "empty section name");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(line, text, "expected 'key = value'");
    const std::string k = trim(text.substr(0, eq));
    const std::string v = trim(text.substr(eq + 1));
    if (k.empty()) throw ConfigError(line, k, "empty key");
    const std::string key = section.empty() ? k : section + "." + k;
    if (v.empty()) throw ConfigError(line, key, "empty value");
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError(line, key, "duplicate key (first set on line " + std::to_string(it->second) + ")");
    seen[key] = line;
    apply_key(c, key, v, line);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_config(in);
}

const char* to_string(StageStatus s) {
  switch (s) {
    case StageStatus::pass: return "pass";
    case StageStatus::warn: return "warn";
    case StageStatus::fail: return "FAIL";
    case StageStatus::skipped: return "skipped";
  }
  return "?";
}

TruthStats compare_truth(const RecoveryGrid& grid, const ConductivitySpec& cond) {
  TruthStats st;
  std::vector<double> errs;
  for (const auto& smp : grid.samples) {
    if (smp.status != "ok" || !std::isfinite(smp.a_hat)) {
      ++st.failed;
      continue;
    }
    PVec p(2);
    p << smp.p.x(), smp.p.y();
    const double a = cond.value(smp.s, p);
    errs.push_back(std::abs(smp.a_hat - a) / a);
  }
  st.count = errs.size();
  if (errs.empty()) return st;
  double sum = 0.0;
  for (double e : errs) {
    st.max_rel_err = std::max(st.max_rel_err, e);
    sum += e;
  }
  st.mean_rel_err = sum / static_cast<double>(errs.size());
  std::sort(errs.begin(), errs.end());
  const std::size_t n = errs.size();
  st.median_rel_err = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
  return st;
}

bool RunReport::passed() const {
  if (hard_failure) return false;
  return std::none_of(stages.begin(), stages.end(), [](const StageResult& s) { return s.status == StageStatus::fail; });
}

void RunReport::write(std::ostream& os) const {
  os << "qcond run report\n";
  os << "conductivity: " << conductivity << "\n";
  os << "hoelder exponent alpha: not modeled\n";
  for (const auto& st : stages) {
    os << "[" << st.name << "] " << to_string(st.status) << " (" << std::fixed << std::setprecision(2) << st.seconds
       << " s)\n";
    os << std::defaultfloat << std::setprecision(6);
    for (const auto& d : st.details) os << "  " << d << "\n";
  }
  if (recovery) {
    os << "recovery: samples=" << recovery->count << " failed=" << recovery->failed
       << " max_rel_err=" << recovery->max_rel_err << " median_rel_err=" << recovery->median_rel_err
       << " mean_rel_err=" << recovery->mean_rel_err << "\n";
  }
  os << "total time: " << std::fixed << std::setprecision(2) << seconds << " s\n" << std::defaultfloat;
  os << "overall: " << (passed() ? "PASS" : "FAIL") << "\n";
}

Mesh build_configured_mesh(const RunConfig& config) {
  return config.domain == "polygon" ? build_polygon_mesh(config.sides, config.radius, config.h)
                                    : build_disk_mesh(config.radius, config.h);
}

PointFunction manufactured_source(const ConductivitySpec& cond, PointFunction u,
                                  std::function<Vec2(const Vec2&)> grad_u, double step) {
  return [cond, u = std::move(u), grad_u = std::move(grad_u), step](const Vec2& x) {
    auto flux = [&](const Vec2& y) {
      const Vec2 g = grad_u(y);
      PVec p(2);
      p << g.x(), g.y();
      return Vec2(cond.value(u(y), p) * g);
    };
    const Vec2 ex(step, 0.0), ey(0.0, step);
    return (flux(x + ex).x() - flux(x - ex).x() + flux(x + ey).y() - flux(x - ey).y()) / (2.0 * step);
  };
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

std::string describe(const ConditionCheck& c) {
  if (!c.evaluated) return c.name + ": not evaluated";
  std::ostringstream os;
  os << std::setprecision(6) << c.name << ": margin=" << c.margin << (c.passed() ? "" : " VIOLATED") << " worst at s="
     << c.worst_s << " p=(";
  for (Eigen::Index i = 0; i < c.worst_p.size(); ++i) os << (i ? "," : "") << c.worst_p[i];
  os << ")";
  return os.str();
}

NewtonOptions newton_options(const RunConfig& c) {
  NewtonOptions o;
  o.rel_tol = c.newton_rel_tol;
  o.max_iters = c.newton_max_iters;
  return o;
}

StageResult structural_stage(const RunConfig& config, const ConductivitySpec& cond, bool& hard) {
  StageResult st{"structural", StageStatus::pass, {}, 0.0};
  const auto t0 = Clock::now();
  Range pr = config.structural_p;
  if (config.regime == Regime::decay && !config.radius_values.empty())
    pr.hi = std::max(pr.hi, *std::max_element(config.radius_values.begin(), config.radius_values.end()));
  const ConditionReport rep = check_structural_conditions(cond, config.structural_s, pr, config.structural_density);
  for (const ConditionCheck* c : rep.checks()) st.details.push_back(describe(*c));
  if (!rep.coercive()) {
    st.status = StageStatus::fail;
    hard = true;
    st.details.push_back("coercivity violated: run stopped");
  } else if (config.regime == Regime::decay && !rep.decay_regime()) {
    st.status = StageStatus::fail;
    hard = true;
    st.details.push_back("decay-regime conditions violated: run stopped");
  } else if (!rep.growth()) {
    st.status = StageStatus::warn;
    st.details.push_back("growth bound violated on the sampled grid (reported, run continues)");
  }
  st.seconds = since(t0);
  return st;
}

StageResult mesh_stage(const Mesh& mesh) {
  StageResult st{"mesh", StageStatus::pass, {}, 0.0};
  const MeshStats ms = mesh_stats(mesh);
  st.details.push_back("vertices=" + std::to_string(ms.vertices) + " triangles=" + std::to_string(ms.triangles) +
                       " boundary=" + std::to_string(ms.boundary_vertices));
  st.details.push_back("h=" + fmt(ms.h) + " diameter=" + fmt(ms.diameter) + " area=" + fmt(ms.total_area));
  st.details.push_back("triangle areas in [" + fmt(ms.min_area) + ", " + fmt(ms.max_area) + "], angles in [" +
                       fmt(ms.min_angle_deg) + ", " + fmt(ms.max_angle_deg) + "] deg");
  if (!(ms.min_area > 0.0)) st.status = StageStatus::fail;
  return st;
}

/// Random smooth boundary data: a few low Fourier modes in the polar angle.
Vec random_smooth_data(const Mesh& mesh, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double c[4][2];
  for (auto& row : c)
    for (double& v : row) v = U(rng);
  const double c0 = U(rng);
  return sample_boundary(mesh, [&](const Vec2& x) {
    const double th = std::atan2(x.y() - mesh.center().y(), x.x() - mesh.center().x());
    double v = c0;
    for (int k = 1; k <= 4; ++k) v += (c[k - 1][0] * std::cos(k * th) + c[k - 1][1] * std::sin(k * th)) / (k * k);
    return amp * v;
  });
}

StageResult forward_stage(const RunConfig& config, const ConductivitySpec& cond, std::ostream& csv,
                          std::mt19937_64& rng) {
  StageResult st{"forward", StageStatus::pass, {}, 0.0};
  const auto t0 = Clock::now();
  const auto ustar = [](const Vec2& x) { return 0.1 * std::sin(x.x()) * std::exp(x.y()); };
  const auto gstar = [](const Vec2& x) {
    return Vec2(0.1 * std::cos(x.x()) * std::exp(x.y()), 0.1 * std::sin(x.x()) * std::exp(x.y()));
  };
  const PointFunction source = manufactured_source(cond, ustar, gstar);
  csv << "h,vertices,max_error,order,newton_iters,residual,converged\n";
  std::vector<double> hs = config.convergence_h;
  std::sort(hs.begin(), hs.end(), std::greater<>());
  double prev_err = 0.0, prev_h = 0.0, worst_order = std::numeric_limits<double>::infinity();
  for (double h : hs) {
    RunConfig mc = config;
    mc.h = h;
    auto mesh = std::make_shared<const Mesh>(build_configured_mesh(mc));
    const ForwardSolver solver(cond, mesh, newton_options(config));
    const DiscreteSolution sol = solver.solve(sample_boundary(*mesh, ustar), nullptr, &source);
    double err = 0.0;
    for (int v = 0; v < mesh->num_vertices(); ++v) err = std::max(err, std::abs(sol.u[v] - ustar(mesh->vertices()[v])));
    std::string order;
    if (prev_h > 0.0) {
      const double o = std::log(prev_err / err) / std::log(prev_h / h);
      worst_order = std::min(worst_order, o);
      order = fmt(o);
    }
    csv << h << ',' << mesh->num_vertices() << ',' << err << ',' << order << ',' << sol.newton_iters << ','
        << sol.residual_norm << ',' << (sol.converged ? 1 : 0) << '\n';
    st.details.push_back("manufactured h=" + fmt(h) + " max_error=" + fmt(err) + (order.empty() ? "" : " order=" + order) +
                         " newton_iters=" + std::to_string(sol.newton_iters));
    if (!sol.converged) {
      st.status = StageStatus::fail;
      st.details.push_back("Newton failed at h=" + fmt(h) + ": " + sol.message);
    }
    prev_err = err;
    prev_h = h;
  }
  if (std::isfinite(worst_order) && worst_order < 1.8 && st.status == StageStatus::pass) {
    st.status = StageStatus::warn;
    st.details.push_back("observed order below 1.8");
  }

  // comparison principle on seeded random ordered pairs
  auto mesh = std::make_shared<const Mesh>(build_configured_mesh(config));
  const ForwardSolver solver(cond, mesh, newton_options(config));
  std::uniform_real_distribution<double> U(0.0, 0.2);
  int violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < config.comparison_pairs; ++k) {
    const Vec f1 = random_smooth_data(*mesh, rng, 0.3);
    const Vec bumpv = random_smooth_data(*mesh, rng, 0.1);
    const double lift = U(rng) + std::max(0.0, -bumpv.minCoeff());
    const Vec f2 = f1 + (bumpv.array() + lift).matrix();
    const DiscreteSolution s1 = solver.solve(f1), s2 = solver.solve(f2);
    const double gap = (s1.u - s2.u).maxCoeff();
    worst = std::max(worst, gap);
    if (!s1.converged || !s2.converged || gap > 1e-8) ++violations;
  }
  if (config.comparison_pairs > 0) {
    st.details.push_back("comparison principle: pairs=" + std::to_string(config.comparison_pairs) +
                         " violations=" + std::to_string(violations) + " max(u1-u2)=" + fmt(worst));
    if (violations) st.status = StageStatus::fail;
  }
  st.seconds = since(t0);
  return st;
}

Vec base_data(const Mesh& mesh) {
  return sample_boundary(mesh, [](const Vec2& x) { return 0.5 * (x.x() + 0.5 * x.x() * x.y()); });
}

StageResult linearization_stage(const RunConfig& config, const ForwardSolver& solver) {
  StageResult st{"linearization", StageStatus::pass, {}, 0.0};
  const auto t0 = Clock::now();
  const Mesh& mesh = solver.mesh();
  const Vec f = base_data(mesh);
  const Vec h = sample_boundary(mesh, [&](const Vec2& x) {
    return std::cos(3.0 * std::atan2(x.y() - mesh.center().y(), x.x() - mesh.center().x()));
  });
  std::vector<double> ts = config.fd_t;
  std::sort(ts.begin(), ts.end(), std::greater<>());
  const auto rows = fd_derivative_check(solver, f, h, ts);
  std::ostringstream line;
  line << "fd errors:";
  for (const auto& r : rows) line << " t=" << r.t << ":" << std::setprecision(4) << r.error;
  st.details.push_back(line.str());
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (!rows[k].converged || !rows[k - 1].converged) {
      st.status = StageStatus::fail;
      st.details.push_back("forward solve failed in the difference quotient");
      break;
    }
    if (rows[k].error < 1e-9) break;  // solver floor
    const double ratio = std::pow(rows[k - 1].error / rows[k].error, 1.0 / std::log10(rows[k - 1].t / rows[k].t));
    st.details.push_back("ratio per decade " + fmt(ratio));
    if (ratio < 8.0 || ratio > 12.0) st.status = StageStatus::warn;
  }
  const DiscreteSolution base = solver.solve(f);
  const BlockSystem K1 = solver.jacobian(base.u);
  const BlockSystem K2 = linearized_stiffness(solver.conductivity(), solver.pattern(), base.u);
  double diff = 0.0, scale = 0.0;
  for (auto [a, b] : {std::pair{&K1.II, &K2.II}, {&K1.IB, &K2.IB}, {&K1.BI, &K2.BI}, {&K1.BB, &K2.BB}}) {
    const SpMat d = *a - *b;
    for (int k = 0; k < d.outerSize(); ++k)
      for (SpMat::InnerIterator it(d, k); it; ++it) diff = std::max(diff, std::abs(it.value()));
    for (int k = 0; k < a->outerSize(); ++k)
      for (SpMat::InnerIterator it(*a, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  }
  st.details.push_back("jacobian vs linearized stiffness: max abs diff=" + fmt(diff) + " (max entry " + fmt(scale) + ")");
  if (diff > 1e-12 * std::max(1.0, scale)) st.status = StageStatus::fail;
  const LinearizedOperator op(solver, base, config.condition_threshold);
  st.details.push_back("condition estimate=" + fmt(op.condition_estimate()));
  if (!op.ok()) {
    st.status = StageStatus::fail;
    st.details.push_back(op.message());
  }
  st.seconds = since(t0);
  return st;
}

StageResult geometry_stage(const ForwardSolver& solver) {
  StageResult st{"geometry", StageStatus::pass, {}, 0.0};
  const auto t0 = Clock::now();
  const DiscreteSolution base = solver.solve(base_data(solver.mesh()));
  const OperatorEquivalence eq = operator_equivalence_residual(solver.conductivity(), base);
  st.details.push_back("operator equivalence: relative residual=" + fmt(eq.relative_residual) +
                       " vertices=" + std::to_string(eq.vertices));
  st.details.push_back("det G error=" + fmt(eq.max_det_G_error));
  if (eq.max_det_G_error > 1e-10) st.status = StageStatus::fail;
  double normal = 0.0;
  for (int k = 0; k < 8; ++k)
    normal = std::max(normal, normal_identity_residual(solver, base, boundary_frame_at(solver.mesh(), k * std::numbers::pi / 4.0)));
  st.details.push_back("normal identity residual=" + fmt(normal));
  if (normal > 1e-12) st.status = StageStatus::fail;
  st.details.push_back("n >= 3 identities: algebra-tested only");
  st.seconds = since(t0);
  return st;
}

ReconstructionOptions reconstruction_options(const RunConfig& c) {
  ReconstructionOptions o;
  o.s_grid = c.s_grid;
  o.directions = c.directions;
  o.radii = c.radii;
  o.radius_fraction = c.radius_fraction;
  o.radius_values = c.radius_values;
  o.radial_spacing = c.radial_spacing;
  o.regime = c.regime;
  const double pi1 = c.pi1;
  o.jet.radius.pi1 = [pi1](double) { return pi1; };
  o.jet.radius.big_n = c.big_n;
  o.jet.radius.regime = c.regime;
  o.jet.tol_jet_factor = c.tol_jet_factor;
  o.jet.max_iters = c.jet_max_iters;
  o.jet.newton = newton_options(c);
  o.symbol = c.symbol;
  o.condition_threshold = c.condition_threshold;
  o.jobs = c.jobs;
  return o;
}

StageResult reconstruction_stage(const RunConfig& config, const ForwardSolver& solver, RunArtifacts& art) {
  StageResult st{"reconstruction", StageStatus::pass, {}, 0.0};
  const auto t0 = Clock::now();
  RecoveryGrid grid = reconstruct(solver, reconstruction_options(config));
  for (const auto& [s, pi] : grid.pi_profile) st.details.push_back("Pi(" + fmt(s) + ")=" + fmt(pi));
  const TruthStats ts = compare_truth(grid, solver.conductivity());
  st.details.push_back("samples=" + std::to_string(ts.count) + " failed=" + std::to_string(ts.failed));
  st.details.push_back("max_rel_err=" + fmt(ts.max_rel_err) + " (limit " + fmt(config.max_rel_err) + ")" +
                       " median_rel_err=" + fmt(ts.median_rel_err) + " (limit " + fmt(config.median_rel_err) + ")");
  std::map<std::string, int> statuses;
  for (const auto& smp : grid.samples)
    if (smp.status != "ok") ++statuses[smp.status];
  for (const auto& [k, n] : statuses) st.details.push_back("status " + k + ": " + std::to_string(n));
  if (ts.failed > 0 || ts.count == 0 || ts.max_rel_err > config.max_rel_err || ts.median_rel_err > config.median_rel_err)
    st.status = StageStatus::fail;
  art.report.recovery = ts;
  art.grid = std::move(grid);
  st.seconds = since(t0);
  return st;
}

bool enabled(const RunConfig& c, const std::string& name) {
  return std::find(c.stages.begin(), c.stages.end(), name) != c.stages.end();
}

}  // namespace

RunArtifacts run(const RunConfig& config, bool write_files) {
  config.validate();
  const auto t0 = Clock::now();
  RunArtifacts art;
  art.report.conductivity = config.conductivity;
  const ConductivitySpec cond = make_preset(config.conductivity);
  std::mt19937_64 rng(config.seed);
  bool hard = false;

  auto skip = [&](const std::string& name, const std::string& why) {
    art.report.stages.push_back({name, StageStatus::skipped, {why}, 0.0});
  };
  const std::string stopped = "not run: earlier hard failure";

  if (enabled(config, "structural")) art.report.stages.push_back(structural_stage(config, cond, hard));
  else skip("structural", "disabled");

  std::shared_ptr<const Mesh> mesh;
  if (hard) skip("mesh", stopped);
  else {
    try {
      mesh = std::make_shared<const Mesh>(build_configured_mesh(config));
      if (enabled(config, "mesh")) art.report.stages.push_back(mesh_stage(*mesh));
      else skip("mesh", "disabled");
    } catch (const std::exception& e) {
      art.report.stages.push_back({"mesh", StageStatus::fail, {e.what()}, 0.0});
      hard = true;
    }
  }

  std::ostringstream conv;
  std::optional<ForwardSolver> solver;
  if (!hard) solver.emplace(cond, mesh, newton_options(config));
  for (const std::string name : {"forward", "linearization", "geometry", "reconstruction"}) {
    if (hard) {
      skip(name, stopped);
      continue;
    }
    if (!enabled(config, name)) {
      skip(name, "disabled");
      continue;
    }
    try {
      if (name == "forward") art.report.stages.push_back(forward_stage(config, cond, conv, rng));
      else if (name == "linearization") art.report.stages.push_back(linearization_stage(config, *solver));
      else if (name == "geometry") art.report.stages.push_back(geometry_stage(*solver));
      else art.report.stages.push_back(reconstruction_stage(config, *solver, art));
    } catch (const std::exception& e) {
      art.report.stages.push_back({name, StageStatus::fail, {std::string("error: ") + e.what()}, 0.0});
      hard = true;
    }
  }
  art.report.hard_failure = hard;
  art.convergence_csv = conv.str();
  art.report.seconds = since(t0);

  if (write_files) {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    const fs::path dir(config.output_dir);
    std::ofstream(dir / "report.txt") << [&] {
      std::ostringstream os;
      art.report.write(os);
      return os.str();
    }();
    std::ofstream rec(dir / "recovery.csv"), sym(dir / "symbols.csv");
    if (art.grid) {
      write_recovery_csv(rec, *art.grid);
      write_symbols_csv(sym, art.grid->symbols);
    } else {
      write_recovery_csv(rec, RecoveryGrid{});
      write_symbols_csv(sym, {});
    }
    std::ofstream(dir / "convergence.csv") << art.convergence_csv;
  }
  return art;
}

RunReport check(const RunConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  RunReport rep;
  rep.conductivity = config.conductivity;
  bool hard = false;
  rep.stages.push_back(structural_stage(config, make_preset(config.conductivity), hard));
  rep.hard_failure = hard;
  rep.seconds = since(t0);
  return rep;
}

}  // namespace qcond
