#include <CLI11.hpp>
#include <cstdint>
#include <iostream>

#include "stomax/experiments.hpp"
#include "stomax/simd.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stomax: martingale-field simulation, derivative estimation and policy search"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::int64_t seed = -1;
  int paths = 0;
  int threads = 0;
  bool print_backend = false;
  app.add_flag("--backend", print_backend, "print the selected SIMD backend and continue");

  for (const auto& kind : stomax::ExperimentConfig::known_kinds()) {
    auto* sub = app.add_subcommand(kind, "run the '" + kind + "' experiment");
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--paths", paths, "override the number of Monte Carlo paths");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--threads", threads, "worker threads (0 = hardware default)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string kind = app.get_subcommands().front()->get_name();

  stomax::ExperimentConfig cfg;
  try {
    cfg = stomax::load_config_file(config_path);
    if (cfg.kind != kind)
      throw stomax::ConfigError("config kind '" + cfg.kind + "' does not match subcommand '" +
                                kind + "'");
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (paths > 0) cfg.paths = paths;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
  } catch (const stomax::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  if (print_backend) std::cout << "simd backend: " << stomax::simd::backend_name() << "\n";

  try {
    auto report = stomax::run_experiment(cfg);
    stomax::write_report(report, cfg.out_dir);
    for (const auto& c : report.checks)
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << c.value
                << " expected=" << c.expected
                << (c.exact ? " (exact)" : " tol=" + std::to_string(c.tolerance)) << "\n";
    std::cout << (report.all_pass() ? "PASS" : "FAIL") << " (" << report.checks.size()
              << " checks), summary: " << cfg.out_dir << "/summary.json\n";
    return stomax::report_exit_code(report);
  } catch (const stomax::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
