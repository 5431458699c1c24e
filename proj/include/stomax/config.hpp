#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stomax {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One experiment run, parsed from a flat dotted-key document. Unknown keys
/// are rejected (strict mode) and the seed is mandatory.
struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 0;
  int paths = 10000;
  int threads = 0;  // 0: hardware default
  std::string out_dir = "runs/out";

  double horizon = 1.0;
  int steps = 64;

  std::string noise_kind = "compensated_poisson";  // brownian | compensated_poisson | cox
  std::vector<double> intensities = {2.0};
  double cox_initial = 2.0;
  double cox_mean_reversion = 1.0;
  double cox_long_run = 2.0;
  double cox_vol = 0.5;

  int level = 3;
  std::vector<int> levels = {2, 3, 4};

  int basis_degree = 2;
  double ridge = 1e-8;
  bool two_ensemble = true;

  std::string target = "terminal_noise";  // terminal_noise | terminal_noise_sq | counts | counts_sq | constant | external
  std::string integrand = "one";          // one | time

  std::string problem = "lq_drift";  // lq_drift | jump_control | credit

  int opt_max_iter = 40;
  double opt_step0 = 1.0;
  double opt_decay_iters = 50.0;
  int opt_refit_period = 5;
  double opt_tolerance = 1e-3;
  double theta0 = 0.5;

  double credit_rho = 0.05;
  double credit_intensity = 0.02;
  double credit_x0 = 1.0;
  std::string credit_utility = "log";  // log | power
  double credit_power_gamma = 0.5;
  double pi_grid_step = 0.01;

  double margin = 1e-3;

  static const std::vector<std::string>& known_kinds();
};

/// Parses the flat `key = value` document; throws ConfigError with the line
/// number for malformed lines, unknown keys, or missing required keys.
ExperimentConfig parse_config(const std::string& text);

/// Canonical serialization; parse(serialize(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& c);

ExperimentConfig load_config_file(const std::string& path);

}  // namespace stomax
