#include "qcond/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qcond;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

int error_line(const std::string& text) {
  try {
    (void)parse(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

RunConfig tiny(const std::string& preset, const fs::path& out) {
  RunConfig c;
  c.conductivity = preset;
  c.h = 0.05;
  c.s_grid = {-0.5, 0.5};
  c.directions = 2;
  c.radii = 2;
  c.convergence_h = {0.1, 0.05};
  c.comparison_pairs = 1;
  c.median_rel_err = 0.04;
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qcond_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse(
      "# comment\n"
      "conductivity = saturating(0.5,0.1,0.1)\n"
      "regime = decay\n"
      "seed = 42\n"
      "[mesh]\n"
      "domain = polygon\n"
      "sides = 5\n"
      "h = 0.04   # trailing comment\n"
      "[grid]\n"
      "s = -1, 0.5\n"
      "radius_values = 2, 5\n"
      "[checks]\n"
      "structural_p = 0, 5\n");
  CHECK(c.conductivity == "saturating(0.5,0.1,0.1)");
  CHECK(c.regime == Regime::decay);
  CHECK(c.seed == 42);
  CHECK(c.domain == "polygon");
  CHECK(c.sides == 5);
  CHECK(c.h == 0.04);
  CHECK(c.s_grid == std::vector<double>{-1.0, 0.5});
  CHECK(c.radius_values == std::vector<double>{2.0, 5.0});
  CHECK(c.structural_p.hi == 5.0);
  CHECK(c.directions == RunConfig{}.directions);
}

TEST_CASE("config errors carry the line and key") {
  CHECK(error_line("seed = 1\n\nbogus = 3\n") == 3);
  CHECK(error_line("[mesh]\nh = abc\n") == 2);
  CHECK(error_line("[mesh]\nh = 0.1\nh = 0.2\n") == 3);
  CHECK(error_line("conductivity = nonesuch(1)\n") == 1);
  CHECK(error_line("seed =\n") == 1);
  CHECK(error_line("no equals sign\n") == 1);
  try {
    (void)parse("[grid]\ndirections = x\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "grid.directions");
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS((void)parse("[mesh]\nh = 5\n"), ConfigError);
  CHECK_THROWS_AS((void)load_config("/nonexistent/qcond.cfg"), std::exception);
}

TEST_CASE("compare_truth") {
  const auto cond = make_preset("gaussian_p(0.25)");
  RecoveryGrid g;
  for (double r : {0.0, 0.1, 0.2, 0.3}) {
    RecoverySample s;
    s.p = Vec2(r, 0.0);
    PVec p(2);
    p << r, 0.0;
    s.a_hat = cond.value(0.0, p);
    g.samples.push_back(s);
  }
  TruthStats exact = compare_truth(g, cond);
  CHECK(exact.count == 4);
  CHECK(exact.max_rel_err == 0.0);
  CHECK(exact.median_rel_err == 0.0);

  for (auto& s : g.samples) s.a_hat *= 1.01;
  const TruthStats off = compare_truth(g, cond);
  CHECK(off.max_rel_err == doctest::Approx(0.01));
  CHECK(off.median_rel_err == doctest::Approx(0.01));

  g.samples[0].status = "jet_failed";
  const TruthStats failed = compare_truth(g, cond);
  CHECK(failed.failed == 1);
  CHECK(failed.count == 3);
}

TEST_CASE("constant(1) full run passes and the CSV reproduces the statistics") {
  const fs::path out = scratch("constant");
  const RunArtifacts art = run(tiny("constant(1)", out));
  for (const auto& st : art.report.stages) CHECK_MESSAGE(st.status != StageStatus::fail, st.name);
  CHECK(art.report.passed());
  REQUIRE(art.report.recovery.has_value());
  for (const char* f : {"report.txt", "recovery.csv", "convergence.csv", "symbols.csv"}) CHECK(fs::exists(out / f));

  std::ifstream is(out / "recovery.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "s,p1,p2,a_hat,a_true,rel_err,status");
  std::vector<double> errs;
  while (std::getline(is, line)) {
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    REQUIRE(cols.size() == 7);
    if (cols[6] != "ok") continue;
    const double a_hat = std::stod(cols[3]), a = std::stod(cols[4]);
    errs.push_back(std::abs(a_hat - a) / a);
  }
  REQUIRE(errs.size() == art.report.recovery->count);
  std::sort(errs.begin(), errs.end());
  CHECK(errs.back() == doctest::Approx(art.report.recovery->max_rel_err).epsilon(1e-6));
  const std::size_t n = errs.size();
  const double median = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
  CHECK(median == doctest::Approx(art.report.recovery->median_rel_err).epsilon(1e-6));
  fs::remove_all(out);
}

TEST_CASE("a coercivity violation stops the run at the structural stage") {
  const fs::path out = scratch("affine");
  RunConfig c = tiny("affine_p1(1)", out);
  c.structural_p = {0.0, 2.0};
  const RunArtifacts art = run(c, false);
  CHECK(art.report.hard_failure);
  CHECK_FALSE(art.report.passed());
  REQUIRE(!art.report.stages.empty());
  CHECK(art.report.stages[0].name == "structural");
  CHECK(art.report.stages[0].status == StageStatus::fail);
  bool lists_point = false;
  for (const auto& d : art.report.stages[0].details) lists_point |= d.find("p=") != std::string::npos || d.find("p =") != std::string::npos;
  CHECK(lists_point);
  for (std::size_t k = 1; k < art.report.stages.size(); ++k) CHECK(art.report.stages[k].status == StageStatus::skipped);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("runs are deterministic for a fixed seed") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  RunConfig c = tiny("isotropic(0.2)", a);
  c.seed = 11;
  (void)run(c);
  c.output_dir = b.string();
  (void)run(c);
  for (const char* f : {"recovery.csv", "convergence.csv", "symbols.csv"}) {
    const std::string x = slurp(a / f), y = slurp(b / f);
    CHECK(!x.empty());
    CHECK_MESSAGE(x == y, f);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}
