#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "stomax/hamiltonian.hpp"

namespace stomax {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UtilitySpec {
  enum class Kind { Log, Power, Custom };
  Kind kind = Kind::Log;
  double gamma = 0.5;  // Power: U(x) = x^gamma / gamma
  std::function<double(double)> custom_u, custom_du, custom_d2u;

  double value(double x) const;
  double grad(double x) const;
  double curv(double x) const;
  bool needs_positive_wealth() const { return kind != Kind::Custom; }

  static UtilitySpec log_utility();
  static UtilitySpec power_utility(double gamma);
};

/// Defaultable assets: asset z pays excess return rho_z while alive and
/// becomes worthless at the first jump of its counting process.
struct CreditMarketSpec {
  std::vector<double> rho;
  NoiseModel intensity_model;  // CompensatedPoisson or DoublyStochasticPoisson, one mark per asset
  double x0 = 1.0;
  UtilitySpec utility;
};

/// First-jump times per path and asset (grid step index; n_steps = alive).
struct DefaultState {
  int n_paths = 0;
  int n_steps = 0;
  std::vector<int> first_jump;  // n_paths x n_assets
  int tau(int p, int z, int n_assets) const {
    return first_jump[static_cast<std::size_t>(p) * n_assets + z];
  }
  bool alive(int p, int z, int step, int n_assets) const {
    return tau(p, z, n_assets) >= step;
  }
};

/// Compensated default-indicator field derived from a raw counting ensemble:
/// one unit jump at the first jump cell per mark, intensity stopped at zero
/// afterwards. Keeps per-default wealth factors at exactly (1 - pi + drift).
PathEnsemble stop_at_first_jump(const PathEnsemble& raw);
DefaultState extract_default_times(const PathEnsemble& raw);

struct CreditMarket {
  CreditMarketSpec spec;
  MarkSpace marks;
  ControlledSDESpec sde;  // control = invested amounts; aliveness read off the stopped field
  CostSpec cost;

  int n_assets() const { return static_cast<int>(spec.rho.size()); }
  /// Raw model ensemble, stopped at first jumps (the field the wealth sees).
  PathEnsemble make_ensemble(const TimeGrid& grid, int n_paths, std::uint64_t seed) const;
  EnsembleFactory factory(const TimeGrid& grid) const;
};

/// Validates the spec (positive x0, finite returns, concave increasing
/// utility probed numerically) and assembles coefficients: b = sum_z
/// 1_alive u_z rho_z, phi_z = -1_alive u_z, f = 0, g = U.
CreditMarket build_credit_market(const CreditMarketSpec& spec);

/// Proportion policy pi in (0,1)^n with margin; amounts u = pi * X.
ControlPolicy proportion_policy(std::vector<double> pi, double margin_frac = 1e-3);

/// argmax of pi (rho+lambda) + lambda ln(1-pi): the constant-proportion
/// log-utility benchmark.
double analytic_log_optimum(double rho, double lambda);

struct PerformanceRecord {
  double j = 0.0;
  double se = 0.0;
  double utility_sq = 0.0;       // E[U(X_T)^2]
  double marginal_sq = 0.0;      // E[U'(X_T)^2]
};

/// Mean utility of terminal wealth plus admissibility proxies. Throws
/// DomainError (naming the path) if terminal wealth leaves the utility
/// domain.
PerformanceRecord estimate_performance(const PathEnsemble& ens, const CreditMarket& market,
                                       const ControlPolicy& policy);
PerformanceRecord estimate_performance(const PathEnsemble& ens, const CreditMarket& market,
                                       const StatePaths& states);

struct ResidualRecord {
  double aggregate = 0.0;  // mean over paths of int sum_z residual dt
  double se = 0.0;
  std::vector<double> profile;  // per (step, asset) projected residual
  int n_steps = 0;
  int n_assets = 0;
};

/// First-order optimality residual: 1_alive rho_z E[U'|F_t] + dphi/du *
/// kappa_{t,z} lambda_t(z), aggregated per path and profiled per step.
ResidualRecord corollary_residual(const PathEnsemble& ens, const CreditMarket& market,
                                  const StatePaths& states, const AdjointBundle& bundle);

struct ProportionGridPoint {
  double pi = 0.0;
  double j = 0.0;
  double j_se = 0.0;
  double residual = 0.0;
  double residual_se = 0.0;
};

/// J and the optimality residual on a grid of constant proportions, all on
/// common random numbers (single-asset market).
std::vector<ProportionGridPoint> scan_proportions(const CreditMarket& market,
                                                  const TimeGrid& grid, int n_paths,
                                                  std::uint64_t seed,
                                                  const std::vector<double>& pis,
                                                  const AdjointOptions& adjoint_opts,
                                                  bool two_ensemble);

}  // namespace stomax
