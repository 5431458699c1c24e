#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stomax/ensemble.hpp"
#include "stomax/paths.hpp"
#include "stomax/regression.hpp"
#include "stomax/stats.hpp"

namespace stomax {

/// Arguments passed to every coefficient callback; `ens` carries path-local
/// extras (intensities, counts) for omega-dependent coefficients.
struct CoeffArgs {
  double t = 0.0;
  double dt = 0.0;
  int path = 0;
  int step = 0;
  double x = 0.0;
  std::span<const double> u;
  const PathEnsemble* ens = nullptr;
};

using ScalarCoeff = std::function<double(const CoeffArgs&)>;
using GradCoeff = std::function<void(const CoeffArgs&, std::span<double>)>;
using MarkScalarCoeff = std::function<double(int, const CoeffArgs&)>;
using MarkGradCoeff = std::function<void(int, const CoeffArgs&, std::span<double>)>;

/// dX = b(t,u,X) dt + sum_z phi(t,z,u,X) mu(dt,{z}), X_0 fixed.
struct ControlledSDESpec {
  double x0 = 0.0;
  int n_ctrl = 1;
  ScalarCoeff drift;
  ScalarCoeff drift_dx;
  GradCoeff drift_du;
  MarkScalarCoeff jump;
  MarkScalarCoeff jump_dx;
  MarkGradCoeff jump_du;
};

/// J(u) = E[ int f(t,u,X) dt + g(X_T) ]; running part optional.
struct CostSpec {
  ScalarCoeff running;
  ScalarCoeff running_dx;
  GradCoeff running_du;
  std::function<double(double)> terminal;
  std::function<double(double)> terminal_dx;
  bool has_running() const { return static_cast<bool>(running); }
};

/// Open box with an interior margin: admissible values satisfy
/// lo + m < v < hi - m with m = margin_frac * (hi - lo).
struct Box {
  std::vector<double> lo, hi;
  double margin_frac = 1e-3;

  int dim() const { return static_cast<int>(lo.size()); }
  double margin(int j) const { return margin_frac * (hi[j] - lo[j]); }
  bool inside(std::span<const double> v, bool with_margin) const;
  void clamp(std::span<double> v) const;  // project into the margin-shrunk box
};

struct ObsArgs {
  double t = 0.0;
  int path = 0;
  int step = 0;
  double x = 0.0;
  const PathEnsemble* ens = nullptr;
};

/// Feedback control u_theta(t, observables) with values constrained to the
/// open convex box U (margin inside). `observables` doubles as the
/// sub-filtration selector for conditional projections.
struct ControlPolicy {
  enum class Kind {
    Constant,            // u = theta
    ProportionalWealth,  // u_j = theta_j * X_t (theta are proportions in U)
  };
  Kind kind = Kind::Constant;
  std::vector<double> theta;
  Box control_box;  // U in policy coordinates (amounts / proportions)
  BasisSpec observables;

  int n_ctrl() const { return static_cast<int>(theta.size()); }
  void value(const ObsArgs& a, std::span<double> u_out) const;
  /// d u / d theta, row-major n_ctrl x n_theta.
  void du_dtheta(const ObsArgs& a, std::span<double> jac) const;
  /// Policy-coordinate image of a control value (identity / divide by x).
  void to_policy_coords(std::span<const double> u, double x, std::span<double> out) const;
  /// Is the control value admissible (strictly inside U)?
  bool value_in_set(std::span<const double> u, double x, bool with_margin) const;
  /// theta constrained to the margin-shrunk box?
  bool theta_admissible() const { return control_box.inside(theta, true); }
};

/// Bounded predictable control-space perturbation beta(p, k, j).
struct Perturbation {
  int n_ctrl = 1;
  std::function<double(int, int, int)> fn;

  double operator()(int p, int k, int j) const { return fn(p, k, j); }
  static Perturbation constant(int n_ctrl, double v);
  /// alpha * 1_{(t_a, t_a+h]} on one control component; alpha per path.
  static Perturbation pulse(int n_ctrl, int component, int step_lo, int step_hi,
                            std::function<double(int)> alpha);
};

/// Euler scheme with left-endpoint coefficients (controls evaluated before
/// the step's noise enters). Throws on non-finite states, naming the first
/// offending path and step.
StatePaths simulate_state(const PathEnsemble& ens, const ControlledSDESpec& sde,
                          const ControlPolicy& policy);

/// Same scheme with the frozen control process u + y*beta (open-loop).
StatePaths simulate_state(const PathEnsemble& ens, const ControlledSDESpec& sde,
                          const StatePaths& base_controls, const Perturbation& beta, double y);

/// First-variation process from the anchor: per path, values G_s(t_anchor)
/// for s = anchor..K (multiplicative recursion; zero factors propagate).
/// Layout: path-major, (n_steps - anchor + 1) values per path.
std::vector<double> first_variation(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                    const StatePaths& states, int anchor);

/// Y process for the perturbation beta; checks u +- beta stays inside U.
/// Layout: path-major, n_steps+1 values per path.
std::vector<double> variation_process(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                      const ControlPolicy& policy, const StatePaths& states,
                                      const Perturbation& beta);

/// d/dy J(u + y beta) at y = 0, via the variation process.
stats::MeanSE gateaux_derivative(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                 const CostSpec& cost, const ControlPolicy& policy,
                                 const StatePaths& states, const Perturbation& beta);

struct CoeffProbeReport {
  double max_rel_err = 0.0;
  std::string worst;
  bool ok(double tol = 1e-6) const { return max_rel_err <= tol; }
};

/// Central-difference check of the supplied derivative callbacks on sampled
/// path points. Throws nothing; callers decide on the tolerance.
CoeffProbeReport validate_coefficients(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                       const CostSpec& cost, const StatePaths& states,
                                       int n_probes = 32);

}  // namespace stomax
