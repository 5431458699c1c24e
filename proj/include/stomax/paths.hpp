#pragma once

#include <span>
#include <vector>

namespace stomax {

/// Simulated controlled state: X on grid nodes, realized control values on
/// steps. Adapted by construction (X_{k+1} uses data up to step k).
struct StatePaths {
  int n_paths = 0;
  int n_steps = 0;
  int n_ctrl = 0;
  std::vector<double> x;  // n_paths x (n_steps+1)
  std::vector<double> u;  // n_paths x n_steps x n_ctrl

  double state(int p, int k) const {
    return x[static_cast<std::size_t>(p) * (n_steps + 1) + k];
  }
  double& state(int p, int k) { return x[static_cast<std::size_t>(p) * (n_steps + 1) + k]; }
  std::span<const double> control(int p, int k) const {
    return {u.data() + (static_cast<std::size_t>(p) * n_steps + k) * n_ctrl,
            static_cast<std::size_t>(n_ctrl)};
  }
  std::span<double> control(int p, int k) {
    return {u.data() + (static_cast<std::size_t>(p) * n_steps + k) * n_ctrl,
            static_cast<std::size_t>(n_ctrl)};
  }
};

}  // namespace stomax
