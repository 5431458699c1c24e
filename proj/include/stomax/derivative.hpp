#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stomax/dissecting.hpp"
#include "stomax/ensemble.hpp"
#include "stomax/regression.hpp"
#include "stomax/stats.hpp"

namespace stomax {

/// A square-integrable scalar random variable, sampled per path.
struct TargetVariable {
  std::vector<double> values;
  std::string label;
};

struct EstimateOptions {
  double drop_threshold = 1e-8;  // drop cells with ensemble-mean Lambda below this
  double clamp = 1e-12;          // per-path floor for the Lambda divisor
};

/// Piecewise-constant estimate of the integrand field: per cell, ridge
/// regression of xi * mu(cell)/Lambda(cell) on left-endpoint features.
struct DerivativeField {
  struct CellEstimate {
    Cell cell;
    std::vector<double> coeffs;
    bool dropped = false;
    double mean_compensator = 0.0;
  };

  int level = -1;  // -1 when built from an ad-hoc cell list
  int time_cells = 0;
  BasisSpec basis;
  std::vector<CellEstimate> cells;
  int n_paths = 0;
  std::vector<double> fitted;  // cell-major: fitted[c*n_paths + p]
  std::vector<int> dropped_cells;

  double value(int p, int c) const { return fitted[static_cast<std::size_t>(c) * n_paths + p]; }
  /// Cell index covering (step, mark); level fields only.
  int cell_index(int step, int mark, const TimeGrid& grid, int n_marks) const;

  /// Fitted values of the same coefficients on another ensemble's features.
  std::vector<double> evaluate(const FeatureContext& ctx) const;

  /// Per-path value of the integral of the field against the noise.
  std::vector<double> integral_against(const PathEnsemble& ens,
                                       const std::vector<double>& fitted_values) const;
};

/// Field estimate on every level cell of the system.
DerivativeField estimate_derivative(const PathEnsemble& ens, const TargetVariable& target,
                                    const DissectingSystem& system, int level,
                                    const BasisSpec& basis, const StatePaths* states = nullptr,
                                    const EstimateOptions& opts = {});

/// Field estimate on an explicit cell list (e.g. the cells starting at one
/// anchor step, for diagonal adjoint values).
DerivativeField estimate_derivative_cells(const PathEnsemble& ens, const TargetVariable& target,
                                          std::vector<Cell> cells, const BasisSpec& basis,
                                          const StatePaths* states = nullptr,
                                          const EstimateOptions& opts = {});

struct DualityRecord {
  double lhs = 0.0, rhs = 0.0, gap = 0.0;
  double se_lhs = 0.0, se_rhs = 0.0, se_gap = 0.0;
  /// Fit-stage noise frozen into the field's coefficients, estimated from
  /// the evaluation data (k_features * Var(response_c) / n per cell).
  double se_fit = 0.0;
  double combined_se() const { return std::sqrt(se_gap * se_gap + se_fit * se_fit); }
};

/// Compares E[xi * integral(kappa dmu)] with E[integral(field*kappa dLambda)]
/// on the given ensemble; the field's coefficients are re-evaluated there, so
/// an independently fitted field can be checked without bias.
DualityRecord duality_gap(const PathEnsemble& ens, const TargetVariable& target,
                          const std::function<double(int, int, int)>& kappa,
                          const DerivativeField& field, const StatePaths* states = nullptr);

struct RepresentationRecord {
  double xi0_estimate = 0.0;
  double residual_variance = 0.0;
  double target_variance = 0.0;
  struct Probe {
    std::string name;
    double z = 0.0;
  };
  std::vector<Probe> orthogonality;  // corr z-scores vs simple integrals
  double max_abs_z = 0.0;
};

/// Residual xi - mean(xi) - integral(field dmu) and its orthogonality to a
/// family of simple stochastic integrals.
RepresentationRecord representation_residual(const PathEnsemble& ens, const TargetVariable& target,
                                             const DerivativeField& field,
                                             const StatePaths* states = nullptr);

}  // namespace stomax
