#pragma once

// Run configurations, the staged experiment driver and its report.

#include "qcond/conductivity.hpp"
#include "qcond/mesh.hpp"
#include "qcond/recovery.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcond {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string key, const std::string& what);
  [[nodiscard]] int line() const { return line_; }
  [[nodiscard]] const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct RunConfig {
  std::string conductivity = "constant(1)";
  Regime regime = Regime::small;

  std::string domain = "disk";  // disk | polygon
  double radius = 1.0;
  int sides = 6;
  double h = 0.05;

  std::vector<double> s_grid{-1.0, -0.5, 0.0, 0.5, 1.0};
  int directions = 16;
  int radii = 8;
  double radius_fraction = 0.95;
  std::vector<double> radius_values;
  double radial_spacing = 1.0 / 17.0;

  double pi1 = 1.0;
  double big_n = 10.0;
  double tol_jet_factor = 1e-3;
  int jet_max_iters = 40;

  SymbolOptions symbol;

  double newton_rel_tol = 1e-10;
  int newton_max_iters = 50;
  double condition_threshold = 1e12;
  double max_rel_err = 0.05;
  double median_rel_err = 0.02;

  Range structural_s{-1.0, 1.0};
  Range structural_p{0.0, 1.0};
  int structural_density = 21;
  std::vector<double> convergence_h{0.1, 0.05, 0.025};
  std::vector<double> fd_t{1e-1, 1e-2, 1e-3};
  int comparison_pairs = 4;
  std::vector<std::string> stages{"structural", "mesh", "forward", "linearization", "geometry",
                                  "reconstruction"};

  std::string output_dir = "qcond_out";
  std::uint64_t seed = 1;
  int jobs = 1;

  /// Throws ConfigError (line 0) when a value is out of range.
  void validate() const;
};

/// `key = value` lines, optional `[section]` headers (keys inside become
/// `section.key`), `#` comments. Lists are comma separated.
[[nodiscard]] RunConfig parse_config(std::istream& is);
[[nodiscard]] RunConfig load_config(const std::string& path);

enum class StageStatus { pass, warn, fail, skipped };
[[nodiscard]] const char* to_string(StageStatus s);

struct StageResult {
  std::string name;
  StageStatus status = StageStatus::skipped;
  std::vector<std::string> details;
  double seconds = 0.0;
};

struct TruthStats {
  std::size_t count = 0;
  std::size_t failed = 0;
  double max_rel_err = 0.0;
  double median_rel_err = 0.0;
  double mean_rel_err = 0.0;
};

/// rel_err = |a_hat - a| / a over the samples with status ok; a is
/// re-evaluated from cond.
[[nodiscard]] TruthStats compare_truth(const RecoveryGrid& grid, const ConductivitySpec& cond);

struct RunReport {
  std::string conductivity;
  std::vector<StageResult> stages;
  std::optional<TruthStats> recovery;
  bool hard_failure = false;
  double seconds = 0.0;

  [[nodiscard]] bool passed() const;
  void write(std::ostream& os) const;
};

struct RunArtifacts {
  RunReport report;
  std::optional<RecoveryGrid> grid;
  std::string convergence_csv;
};

/// Executes the configured stages in the fixed order
/// structural, mesh, forward, linearization, geometry, reconstruction, stopping
/// after a hard failure. Writes report.txt, recovery.csv, convergence.csv and
/// symbols.csv under config.output_dir unless write_files is false.
[[nodiscard]] RunArtifacts run(const RunConfig& config, bool write_files = true);

/// Structural stage only.
[[nodiscard]] RunReport check(const RunConfig& config);

[[nodiscard]] Mesh build_configured_mesh(const RunConfig& config);

/// div(a(u, grad u) grad u) by central differences of the analytic flux.
[[nodiscard]] PointFunction manufactured_source(const ConductivitySpec& cond, PointFunction u,
                                                std::function<Vec2(const Vec2&)> grad_u,
                                                double step = 1e-4);

}  // namespace qcond
