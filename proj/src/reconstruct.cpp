#include "qcond/recovery.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <thread>

namespace qcond {

namespace {

struct RadialGrid {
  std::vector<double> nodes;        // uniform, nodes[0] = 0
  std::vector<std::size_t> output;  // node indices reported as samples
  std::vector<double> output_radius;
};

RadialGrid radial_grid(const ReconstructionOptions& opts, double pi) {
  RadialGrid g;
  double rmax = 0.0;
  if (!opts.radius_values.empty()) rmax = *std::max_element(opts.radius_values.begin(), opts.radius_values.end());
  else if (std::isfinite(pi)) rmax = opts.radius_fraction * pi;
  if (!(rmax > 0.0)) {
    g.nodes = {0.0};
    return g;
  }
  int n = std::max(opts.radii, static_cast<int>(std::ceil(rmax / opts.radial_spacing - 1e-9)));
  if (!opts.radius_values.empty()) {
    // refine until every requested radius is a node (when that happens soon)
    for (int m = n; m <= 4 * n; ++m) {
      const double dq = rmax / m;
      const bool all = std::all_of(opts.radius_values.begin(), opts.radius_values.end(), [&](double r) {
        return std::abs(r / dq - std::round(r / dq)) < 1e-9;
      });
      if (all) {
        n = m;
        break;
      }
    }
  }
  const double dq = rmax / n;
  for (int k = 0; k <= n; ++k) g.nodes.push_back(k * dq);
  if (opts.radius_values.empty()) {
    for (int k = 1; k <= n; ++k) {
      g.output.push_back(static_cast<std::size_t>(k));
      g.output_radius.push_back(g.nodes[k]);
    }
  } else {
    for (double r : opts.radius_values) {
      g.output.push_back(static_cast<std::size_t>(std::min<long>(n, std::lround(r / dq))));
      g.output_radius.push_back(r);
    }
  }
  return g;
}

/// Piecewise-linear interpolation of r^2 a^2 (smooth in r) at r.
double profile_at(const RadialProfile& prof, double r) {
  const auto& x = prof.radii;
  if (r <= 0.0) return prof.a_hat.front();
  const auto it = std::lower_bound(x.begin(), x.end(), r);
  if (it == x.end()) return prof.a_hat.back();
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  if (std::abs(x[k] - r) < 1e-12 * (1.0 + r) || k == 0) return prof.a_hat[k];
  const double w = (r - x[k - 1]) / (x[k] - x[k - 1]);
  const double f0 = std::pow(x[k - 1] * prof.a_hat[k - 1], 2), f1 = std::pow(x[k] * prof.a_hat[k], 2);
  return std::sqrt((1.0 - w) * f0 + w * f1) / r;
}

struct Job {
  std::size_t s_index = 0;
  int direction = -1;  // -1: the p = 0 node
  std::size_t node = 0;
};

struct JobResult {
  double D = 0.0;
  double det_est = 0.0;
  double antisym_est = 0.0;
  double jet_error = 0.0;
  std::string status = "ok";
  std::optional<SymbolEstimate> symbol;
};

}  // namespace

RecoveryGrid reconstruct(const ForwardSolver& solver, const ReconstructionOptions& opts,
                         const ReconstructionProgress* progress) {
  const Mesh& mesh = solver.mesh();
  const ConductivitySpec& cond = solver.conductivity();
  if (opts.s_grid.empty()) throw std::invalid_argument("reconstruction needs a non-empty s grid");
  if (opts.directions < 1) throw std::invalid_argument("reconstruction needs at least one direction");

  JetOptions jopts = opts.jet;
  jopts.radius.regime = opts.regime;

  RecoveryGrid grid;
  std::vector<RadialGrid> rgrids;
  for (double s : opts.s_grid) {
    const double pi = jet_radius(cond, s, mesh.diameter(), jopts.radius).pi;
    grid.pi_profile.emplace_back(s, pi);
    rgrids.push_back(radial_grid(opts, pi));
  }

  std::vector<BoundaryFrame> frames;
  for (int d = 0; d < opts.directions; ++d) {
    const double phi = 2.0 * std::numbers::pi * d / opts.directions;
    double theta = phi - 0.5 * std::numbers::pi;
    if (theta < 0.0) theta += 2.0 * std::numbers::pi;
    frames.push_back(boundary_frame_at(mesh, theta));
  }

  std::vector<Job> jobs;
  for (std::size_t i = 0; i < opts.s_grid.size(); ++i) {
    jobs.push_back({i, -1, 0});
    for (int d = 0; d < opts.directions; ++d)
      for (std::size_t k = 1; k < rgrids[i].nodes.size(); ++k) jobs.push_back({i, d, k});
  }

  std::vector<JobResult> results(jobs.size());
  auto run_job = [&](const Job& job) {
    JobResult out;
    const double s = opts.s_grid[job.s_index];
    const double r = rgrids[job.s_index].nodes[job.node];
    const BoundaryFrame& frame = frames[job.direction < 0 ? 0 : static_cast<std::size_t>(job.direction)];
    JetRequest req;
    req.frame = frame;
    req.s = s;
    req.p = r * frame.tau;
    req.regime = opts.regime;
    const JetResult jet = prescribe_jet(solver, req, jopts);
    out.jet_error = jet.jet_error;
    if (!jet.ok) {
      out.status = "jet_failed";
      return out;
    }
    const LinearizedOperator op(solver, jet.solution, opts.condition_threshold);
    if (!op.ok()) {
      out.status = "linearization_failed";
      return out;
    }
    SymbolEstimate est = extract_symbol(make_dn_evaluator(op), mesh, frame, s, jet.achieved.p, opts.symbol);
    const MeasuredInvariants inv = measured_invariants(est);
    out.det_est = inv.det_est;
    out.antisym_est = inv.antisym_est;
    out.D = inv.det_est + inv.antisym_est * inv.antisym_est;
    if (!est.reliable) out.status = "symbol_unreliable";
    out.symbol = std::move(est);
    return out;
  };

  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_job(jobs[i]);
      } catch (const std::exception& e) {
        results[i] = JobResult{};
        results[i].status = std::string("error: ") + e.what();
      }
      if (progress && progress->callback) {
        std::lock_guard<std::mutex> lock(mu);
        progress->callback(++done, jobs.size());
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(opts.jobs, static_cast<int>(jobs.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // merge in job order
  std::size_t j = 0;
  for (std::size_t i = 0; i < opts.s_grid.size(); ++i) {
    const double s = opts.s_grid[i];
    const RadialGrid& rg = rgrids[i];
    const JobResult& zero = results[j++];
    if (zero.symbol) grid.symbols.push_back(*zero.symbol);
    auto make_sample = [&](const Vec2& p, double a_hat, const JobResult& jr, const std::string& status) {
      RecoverySample smp;
      smp.s = s;
      smp.p = p;
      smp.a_hat = a_hat;
      smp.status = status;
      smp.det_est = jr.det_est;
      smp.antisym_est = jr.antisym_est;
      smp.jet_error = jr.jet_error;
      PVec pv(2);
      pv << p.x(), p.y();
      smp.a_true = cond.value(s, pv);
      smp.rel_err = std::abs(a_hat - *smp.a_true) / *smp.a_true;
      if (status != "ok") {
        smp.a_hat = std::numeric_limits<double>::quiet_NaN();
        smp.rel_err.reset();
      }
      return smp;
    };
    grid.samples.push_back(make_sample(Vec2::Zero(), std::sqrt(std::max(zero.D, 0.0)), zero, zero.status));

    for (int d = 0; d < opts.directions; ++d) {
      // a failed node spoils the integral beyond it
      std::vector<double> D{zero.D};
      std::vector<std::string> status{zero.status == "ok" ? "ok" : "origin_failed"};
      const std::size_t first = j;
      for (std::size_t k = 1; k < rg.nodes.size(); ++k) {
        const JobResult& jr = results[j++];
        if (jr.symbol) grid.symbols.push_back(*jr.symbol);
        D.push_back(jr.D);
        if (status.back() != "ok") status.push_back(status.back());
        else if (jr.status != "ok") status.push_back(jr.status);
        else if (jr.D < 0.0) status.push_back("inconsistent");
        else status.push_back("ok");
      }
      const RadialProfile prof = radial_integration_recovery(rg.nodes, D);
      for (std::size_t o = 0; o < rg.output.size(); ++o) {
        const double r = rg.output_radius[o];
        const std::size_t node = rg.output[o];
        const JobResult& jr = results[first + node - 1];
        grid.samples.push_back(
            make_sample(r * frames[static_cast<std::size_t>(d)].tau, profile_at(prof, r), jr, status[node]));
      }
    }
  }
  return grid;
}

}  // namespace qcond
