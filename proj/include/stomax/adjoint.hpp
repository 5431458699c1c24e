#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stomax/derivative.hpp"
#include "stomax/state.hpp"

namespace stomax {

/// Thrown when the square-integrability proxies backing the adjoint
/// construction come out non-finite.
struct AdmissibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Adjoint quantities along one evaluation ensemble. K is exact on every
/// grid node; the derivative fields (dK, kappa) are held per anchor (the
/// left endpoints of the chosen partition level) and extended piecewise
/// constantly in between.
struct AdjointBundle {
  int level = 0;
  int anchor_width = 1;
  std::vector<int> anchors;

  int n_paths = 0;
  int n_steps = 0;
  int n_marks = 1;

  std::vector<double> K;  // n_paths x (n_steps+1)
  std::vector<double> F;  // n_paths x n_steps
  std::vector<double> p;  // n_paths x n_anchors

  std::vector<DerivativeField> dK_fields;      // fit-side coefficients per anchor
  std::vector<std::vector<double>> dK_values;  // eval-side fitted, cell-major per anchor
  std::vector<DerivativeField> kappa_fields;
  std::vector<std::vector<double>> kappa_values;

  struct Proxies {
    double terminal_grad_sq = 0.0;   // E[g'(X_T)^2]
    double running_grad_sq = 0.0;    // E[int (df/dx)^2 dt]
    double fg_product_sq = 0.0;      // E[int (F_s G_s(0))^2 ds]
    double cost_sq = 0.0;            // E[int f^2 dt + g(X_T)^2]
    double half_sample_ratio = 1.0;  // stability diagnostic
  } proxies;

  int anchor_of(int step) const { return step / anchor_width; }
  double K_at(int path, int step) const {
    return K[static_cast<std::size_t>(path) * (n_steps + 1) + step];
  }
  double F_at(int path, int step) const {
    return F[static_cast<std::size_t>(path) * n_steps + step];
  }
  double p_at_anchor(int path, int a) const {
    return p[static_cast<std::size_t>(path) * anchors.size() + a];
  }
  double p_at(int path, int step) const { return p_at_anchor(path, anchor_of(step)); }
  double dK_at(int path, int step, int mark) const {
    return dK_values[anchor_of(step)][static_cast<std::size_t>(mark) * n_paths + path];
  }
  double kappa_at(int path, int step, int mark) const {
    return kappa_values[anchor_of(step)][static_cast<std::size_t>(mark) * n_paths + path];
  }
};

struct AdjointOptions {
  int level = 3;
  BasisSpec basis;
  EstimateOptions estimate;
};

/// Fit/eval pair; leave the fit side null for single-ensemble mode.
struct AdjointInputs {
  const PathEnsemble* eval_ens = nullptr;
  const StatePaths* eval_states = nullptr;
  const PathEnsemble* fit_ens = nullptr;
  const StatePaths* fit_states = nullptr;
};

/// K_t = g'(X_T) + sum_{s >= t} (df/dx) dt on every grid node (exact sums).
std::vector<double> compute_K_values(const PathEnsemble& ens, const StatePaths& states,
                                     const CostSpec& cost);

/// F_t = K_t db/dx + sum_z dK_{t,z} dphi/dx lambda_t(z).
std::vector<double> compute_F_values(const PathEnsemble& ens, const StatePaths& states,
                                     const ControlledSDESpec& sde, const std::vector<double>& K,
                                     const std::vector<std::vector<double>>& dK_values,
                                     int anchor_width);

/// p_{t_a} = K_{t_a} + sum_{k >= a} F_k G_k(t_a) dt, with the first-variation
/// recursion fused per anchor (zero factors propagate, no ratios).
std::vector<double> compute_p_values(const PathEnsemble& ens, const StatePaths& states,
                                     const ControlledSDESpec& sde, const std::vector<double>& K,
                                     const std::vector<double>& F, const std::vector<int>& anchors);

/// Full bundle: K exact, dK/kappa by anchored regression (coefficients from
/// the fit side, values on the evaluation side). Throws AdmissibilityError
/// when the integrability proxies are non-finite.
AdjointBundle build_adjoints(const AdjointInputs& in, const ControlledSDESpec& sde,
                             const CostSpec& cost, const DissectingSystem& system,
                             const AdjointOptions& opts);

}  // namespace stomax
