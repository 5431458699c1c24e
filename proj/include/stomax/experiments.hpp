#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stomax/config.hpp"

namespace stomax {

struct CheckRecord {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  double se = 0.0;    // Monte Carlo standard error when applicable
  bool exact = false;  // zero-tolerance identity
  bool pass = false;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<CheckRecord> checks;
  std::vector<std::pair<std::string, std::string>> artifacts;  // label -> path
  double wall_seconds = 0.0;  // goes to report.txt only, never the JSON

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Executes the configured pipeline, writing CSV/binary artifacts under
/// config.out_dir/artifacts. Identical (config, seed) produce identical
/// report content regardless of thread count.
RunReport run_experiment(const ExperimentConfig& cfg);

/// summary.json + report.txt under the directory.
void write_report(const RunReport& report, const std::string& dir);

/// 0 when every check passed, 1 otherwise.
int report_exit_code(const RunReport& report);

}  // namespace stomax
