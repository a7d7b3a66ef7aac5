#include "qcond/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

struct Overrides {
  std::string out;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int jobs = 0;
};

qcond::RunConfig load(const std::string& path, const Overrides& ov) {
  qcond::RunConfig cfg = qcond::load_config(path);
  if (!ov.out.empty()) cfg.output_dir = ov.out;
  if (ov.has_seed) cfg.seed = ov.seed;
  if (ov.jobs > 0) cfg.jobs = ov.jobs;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qcond: quasilinear conductivity reconstruction from simulated boundary data"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", ov.out, "output directory");
    sub->add_option("--seed", ov.seed, "seed for randomized checks")->each([&](const std::string&) { ov.has_seed = true; });
    sub->add_option("--jobs", ov.jobs, "worker threads for the reconstruction")->check(CLI::PositiveNumber);
  };
  CLI::App* run = app.add_subcommand("run", "run all configured stages and write the report and CSV tables");
  CLI::App* chk = app.add_subcommand("check", "structural conditions only");
  CLI::App* msh = app.add_subcommand("mesh", "mesh statistics");
  add_common(run);
  add_common(chk);
  add_common(msh);

  CLI11_PARSE(app, argc, argv);

  try {
    const qcond::RunConfig cfg = load(config, ov);
    if (run->parsed()) {
      const qcond::RunArtifacts art = qcond::run(cfg);
      art.report.write(std::cout);
      std::cout << "outputs written to " << cfg.output_dir << "\n";
      return art.report.passed() ? 0 : 1;
    }
    if (chk->parsed()) {
      const qcond::RunReport rep = qcond::check(cfg);
      rep.write(std::cout);
      return rep.passed() ? 0 : 1;
    }
    const qcond::Mesh mesh = qcond::build_configured_mesh(cfg);
    const qcond::MeshStats ms = qcond::mesh_stats(mesh);
    std::cout << "domain: " << cfg.domain << " radius " << cfg.radius << "\n"
              << "vertices: " << ms.vertices << "\ntriangles: " << ms.triangles
              << "\nboundary vertices: " << ms.boundary_vertices << "\nh: " << ms.h << "\ndiameter: " << ms.diameter
              << "\narea: " << ms.total_area << "\ntriangle area range: " << ms.min_area << " " << ms.max_area
              << "\nangle range (deg): " << ms.min_angle_deg << " " << ms.max_angle_deg << "\n";
    if (!ov.out.empty()) {
      std::filesystem::create_directories(ov.out);
      std::ofstream os(std::filesystem::path(ov.out) / "mesh.txt");
      qcond::write_mesh(os, mesh);
      std::cout << "mesh written to " << (std::filesystem::path(ov.out) / "mesh.txt").string() << "\n";
    }
    return 0;
  } catch (const qcond::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
