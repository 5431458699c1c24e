#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stomax/adjoint.hpp"
#include "stomax/dissecting.hpp"

namespace stomax {

/// Control gradient of the Hamiltonian along paths, plus its projection on
/// the observation filtration.
struct GradientField {
  int n_paths = 0;
  int n_steps = 0;
  int n_ctrl = 1;
  std::vector<double> raw;        // (p, k, j)
  std::vector<double> projected;  // same layout; empty until projected

  std::size_t idx(int p, int k, int j) const {
    return (static_cast<std::size_t>(p) * n_steps + k) * n_ctrl + j;
  }
  double value(int p, int k, int j) const { return raw[idx(p, k, j)]; }
  double proj(int p, int k, int j) const { return projected[idx(p, k, j)]; }
};

/// dH/du_j = df/du_j + db/du_j p_t + sum_z kappa_t(z) dphi/du_j(z) lambda_t(z).
GradientField hamiltonian_gradient(const PathEnsemble& ens, const StatePaths& states,
                                   const ControlledSDESpec& sde, const CostSpec& cost,
                                   const AdjointBundle& bundle);

/// Per-step ridge regression of each control component on the observation
/// features; fills field.projected.
void project_gradient(GradientField& field, const BasisSpec& observables,
                      const FeatureContext& ctx);

/// Generic per-step conditional projection of per-path values (layout
/// n_paths x n_steps), returned as fitted values.
std::vector<double> conditional_projection(const std::vector<double>& values, int n_paths,
                                           int n_steps, const BasisSpec& observables,
                                           const FeatureContext& ctx);

struct CriticalityReport {
  double score = 0.0;     // mean over paths of sum_k |projected|^2 dt
  double score_se = 0.0;
  double noise_floor = 0.0;  // expected score from regression noise alone
  std::vector<double> profile;  // per-step mean |projected|^2
};

CriticalityReport criticality_score(const GradientField& field, const TimeGrid& grid);

using EnsembleFactory = std::function<PathEnsemble(std::uint64_t seed, int n_paths)>;

struct OptimizeConfig {
  int max_iter = 40;
  double step0 = 1.0;
  double decay_iters = 50.0;  // gamma_m = step0 / (1 + m/decay_iters)
  int refit_period = 5;
  double tolerance = 1e-3;  // stop when the criticality score drops below
  int n_paths = 20000;
  std::uint64_t seed = 1;
  bool two_ensemble = true;
  std::uint64_t fit_seed_salt = 0x9E3779B97F4A7C15ULL;
  int level = 3;
  BasisSpec basis;  // adjoint regression basis
  EstimateOptions estimate;
};

struct TraceRow {
  int iter = 0;
  std::vector<double> theta;
  double j_estimate = 0.0;
  double j_se = 0.0;
  double score = 0.0;
  double step_size = 0.0;
};

struct OptimizeResult {
  ControlPolicy policy;
  std::vector<TraceRow> trace;
  std::string termination;  // "tolerance" | "max_iter"
  CriticalityReport final_criticality;
};

/// Projected gradient ascent on the policy parameters: theta <- Pi_box(theta
/// + gamma_m * E[int proj(dH/du) du/dtheta dt]), with the adjoint
/// regressions refit every refit_period iterations. Deterministic for fixed
/// config (common random numbers across iterations).
OptimizeResult optimize_policy(const EnsembleFactory& factory, const TimeGrid& grid,
                               const ControlledSDESpec& sde, const CostSpec& cost,
                               const ControlPolicy& policy0, const OptimizeConfig& cfg);

/// J estimate for one policy on one ensemble (mean of int f dt + g(X_T)).
stats::MeanSE estimate_objective(const PathEnsemble& ens, const StatePaths& states,
                                 const CostSpec& cost);

}  // namespace stomax
