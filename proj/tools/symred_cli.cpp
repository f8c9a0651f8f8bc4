// symred_cli: runs the verification experiments.
//
//   symred_cli list
//   symred_cli run --experiment sphere_heat --seed 7 --out results/
//   symred_cli run --config run.toml --paths 2000
//
// Exit status: 0 all tolerances pass, 1 usage or config error, 2 tolerance
// failure, 3 numeric fault.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "symred/config.hpp"
#include "symred/experiments.hpp"

namespace {

int list_experiments() {
  std::cout << std::left << std::setw(22) << "experiment" << std::setw(14) << "anchor" << "defaults / description\n";
  for (const auto& e : symred::experiment_catalog()) {
    std::cout << std::left << std::setw(22) << e.name << std::setw(14) << e.anchor << e.defaults.dump() << '\n'
              << std::setw(36) << "" << e.description << '\n';
  }
  return 0;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw symred::ConfigError("cannot write '" + path.string() + "'");
  os << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symmetry-reduction verification experiments"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "print the experiment catalog");
  auto* run = app.add_subcommand("run", "run one experiment");

  std::string config_path, experiment, out_dir;
  std::uint64_t seed = 0;
  std::size_t paths = 0;
  double dt = 0.0, t = 0.0, tol_scale = 1.0;
  unsigned threads = 0;
  bool csv = false, wden = false;
  auto* o_config = run->add_option("--config", config_path, "flat key = value config file");
  auto* o_exp = run->add_option("--experiment", experiment, "experiment name (see `list`)");
  auto* o_seed = run->add_option("--seed", seed, "master seed (required here or in the config)");
  auto* o_paths = run->add_option("--paths", paths, "number of Monte Carlo paths");
  auto* o_dt = run->add_option("--dt", dt, "time step");
  auto* o_t = run->add_option("--t", t, "final time");
  auto* o_out = run->add_option("--out", out_dir, "output directory for results.json and artifacts");
  auto* o_tol = run->add_option("--tolerance-scale", tol_scale, "multiplies every tolerance");
  auto* o_threads = run->add_option("--threads", threads, "worker threads (0 = all cores)");
  auto* o_csv = run->add_flag("--csv", csv, "write CSV surfaces where the experiment has them");
  auto* o_wden = run->add_flag("--wden", wden, "write binary ensemble dumps");
  (void)o_config;

  CLI11_PARSE(app, argc, argv);

  if (*list) return list_experiments();

  symred::ExperimentConfig cfg;
  try {
    symred::ConfigTable table;
    if (!config_path.empty()) table = symred::load_config(config_path);
    // flags win over file values
    if (*o_exp) table.set("experiment", experiment);
    if (*o_seed) table.set("seed", seed);
    if (*o_paths) table.set("paths", paths);
    if (*o_dt) table.set("dt", dt);
    if (*o_t) table.set("t", t);
    if (*o_out) table.set("out", out_dir);
    if (*o_tol) table.set("tolerance_scale", tol_scale);
    if (*o_threads) table.set("threads", threads);
    if (*o_csv) table.set("csv", csv);
    if (*o_wden) table.set("wden", wden);
    cfg = symred::experiment_config(table);
    cfg.validate();
    symred::find_experiment(cfg.experiment);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  symred::ExperimentOutput out;
  const auto start = std::chrono::steady_clock::now();
  try {
    out = symred::run_experiment(cfg);
  } catch (const symred::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numeric fault: " << e.what() << '\n';
    return 3;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::string doc = out.results.dump(2) + "\n";
  try {
    if (!cfg.out_dir.empty()) {
      const std::filesystem::path dir(cfg.out_dir);
      std::filesystem::create_directories(dir);
      write_file(dir / "results.json", doc);
      for (const auto& [name, content] : out.csv_files) write_file(dir / name, content);
      for (const auto& [name, ens] : out.ensembles) {
        std::ofstream os(dir / name, std::ios::binary);
        symred::write_wden(ens, os);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  const auto& info = symred::find_experiment(cfg.experiment);
  std::cout << "experiment " << info.name << " [" << info.anchor << "] seed " << *cfg.seed << '\n'
            << info.description << '\n'
            << out.summary << '\n'
            << "elapsed " << std::fixed << std::setprecision(2) << seconds << " s\n";
  if (cfg.out_dir.empty()) std::cout << doc;
  else std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "results.json").string() << '\n';
  return out.pass ? 0 : 2;
}
