#include "stomax/hamiltonian.hpp"

#include <cmath>

#include "stomax/parallel.hpp"

namespace stomax {

GradientField hamiltonian_gradient(const PathEnsemble& ens, const StatePaths& states,
                                   const ControlledSDESpec& sde, const CostSpec& cost,
                                   const AdjointBundle& bundle) {
  if (bundle.n_paths != ens.n_paths || bundle.n_steps != ens.grid.n_steps)
    throw std::invalid_argument("hamiltonian_gradient: bundle/ensemble misaligned");
  GradientField f;
  f.n_paths = ens.n_paths;
  f.n_steps = ens.grid.n_steps;
  f.n_ctrl = sde.n_ctrl;
  f.raw.resize(static_cast<std::size_t>(f.n_paths) * f.n_steps * f.n_ctrl);

  const int M = ens.marks.size();
  const double dt = ens.grid.dt();
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    std::vector<double> grad(f.n_ctrl), acc(f.n_ctrl);
    for (int p = lo; p < hi; ++p) {
      for (int k = 0; k < f.n_steps; ++k) {
        CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
        for (int j = 0; j < f.n_ctrl; ++j) acc[j] = 0.0;
        if (cost.has_running()) {
          cost.running_du(args, grad);
          for (int j = 0; j < f.n_ctrl; ++j) acc[j] += grad[j];
        }
        sde.drift_du(args, grad);
        const double pt = bundle.p_at(p, k);
        for (int j = 0; j < f.n_ctrl; ++j) acc[j] += grad[j] * pt;
        for (int z = 0; z < M; ++z) {
          sde.jump_du(z, args, grad);
          const double kz = bundle.kappa_at(p, k, z) * ens.lambda(p, k, z);
          for (int j = 0; j < f.n_ctrl; ++j) acc[j] += grad[j] * kz;
        }
        for (int j = 0; j < f.n_ctrl; ++j) f.raw[f.idx(p, k, j)] = acc[j];
      }
    }
  });
  return f;
}

void project_gradient(GradientField& field, const BasisSpec& observables,
                      const FeatureContext& ctx) {
  field.projected.assign(field.raw.size(), 0.0);
  DesignBuilder builder(observables, ctx);
  const int n = field.n_paths;
  const int kf = builder.n_features();
  std::vector<double> response(n);
  for (int k = 0; k < field.n_steps; ++k) {
    const auto& design = builder.at_step(k);
    auto factor = gram_cholesky(design, n, kf, observables.ridge_rel);
    for (int j = 0; j < field.n_ctrl; ++j) {
      for (int p = 0; p < n; ++p) response[p] = field.raw[field.idx(p, k, j)];
      auto rhs = design_rhs(design, n, kf, response);
      factor.solve_in_place(rhs);
      auto fit = design_fitted(design, n, kf, rhs);
      for (int p = 0; p < n; ++p) field.projected[field.idx(p, k, j)] = fit[p];
    }
  }
}

std::vector<double> conditional_projection(const std::vector<double>& values, int n_paths,
                                           int n_steps, const BasisSpec& observables,
                                           const FeatureContext& ctx) {
  GradientField f;
  f.n_paths = n_paths;
  f.n_steps = n_steps;
  f.n_ctrl = 1;
  f.raw = values;
  project_gradient(f, observables, ctx);
  return std::move(f.projected);
}

CriticalityReport criticality_score(const GradientField& field, const TimeGrid& grid) {
  if (field.projected.empty())
    throw std::logic_error("criticality_score: project the gradient first");
  CriticalityReport rep;
  const double dt = grid.dt();
  const int n = field.n_paths;

  std::vector<double> per_path(n, 0.0);
  rep.profile.assign(field.n_steps, 0.0);
  for (int p = 0; p < n; ++p) {
    double acc = 0.0;
    for (int k = 0; k < field.n_steps; ++k) {
      double sq = 0.0;
      for (int j = 0; j < field.n_ctrl; ++j) {
        const double v = field.proj(p, k, j);
        sq += v * v;
      }
      rep.profile[k] += sq / n;
      acc += sq * dt;
    }
    per_path[p] = acc;
  }
  const auto ms = stats::mean_se(per_path);
  rep.score = ms.value;
  rep.score_se = ms.se;

  // Regression noise alone contributes about k_feat/n of the raw variance
  // per step and control component.
  double floor = 0.0;
  for (int k = 0; k < field.n_steps; ++k) {
    for (int j = 0; j < field.n_ctrl; ++j) {
      std::vector<double> raw(n);
      for (int p = 0; p < n; ++p) raw[p] = field.value(p, k, j);
      const auto rm = stats::mean_se(raw);
      const double var = rm.se * rm.se * n;
      floor += var / n * dt;  // one effective feature at minimum
    }
  }
  rep.noise_floor = floor;
  return rep;
}

stats::MeanSE estimate_objective(const PathEnsemble& ens, const StatePaths& states,
                                 const CostSpec& cost) {
  const int K = ens.grid.n_steps;
  const double dt = ens.grid.dt();
  std::vector<double> vals(ens.n_paths);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      double acc = 0.0;
      if (cost.has_running()) {
        for (int k = 0; k < K; ++k) {
          CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
          acc += cost.running(args) * dt;
        }
      }
      acc += cost.terminal(states.state(p, K));
      vals[p] = acc;
    }
  });
  return stats::mean_se(vals);
}

OptimizeResult optimize_policy(const EnsembleFactory& factory, const TimeGrid& grid,
                               const ControlledSDESpec& sde, const CostSpec& cost,
                               const ControlPolicy& policy0, const OptimizeConfig& cfg) {
  if (!policy0.theta_admissible())
    throw std::invalid_argument("optimize_policy: initial parameters outside the margin box");

  auto eval_ens = factory(cfg.seed, cfg.n_paths);
  PathEnsemble fit_ens;
  if (cfg.two_ensemble) fit_ens = factory(cfg.seed ^ cfg.fit_seed_salt, cfg.n_paths);
  auto system = build_dissecting_system(grid, eval_ens.marks, cfg.level);

  OptimizeResult result;
  result.policy = policy0;
  ControlPolicy& policy = result.policy;

  AdjointBundle bundle;
  bool have_bundle = false;
  const int n_theta = policy.n_ctrl();

  for (int m = 0; m < cfg.max_iter; ++m) {
    auto eval_states = simulate_state(eval_ens, sde, policy);
    const auto j = estimate_objective(eval_ens, eval_states, cost);

    StatePaths fit_states;
    if (m % cfg.refit_period == 0 || !have_bundle) {
      AdjointInputs in;
      in.eval_ens = &eval_ens;
      in.eval_states = &eval_states;
      if (cfg.two_ensemble) {
        fit_states = simulate_state(fit_ens, sde, policy);
        in.fit_ens = &fit_ens;
        in.fit_states = &fit_states;
      }
      AdjointOptions aopts;
      aopts.level = cfg.level;
      aopts.basis = cfg.basis;
      aopts.estimate = cfg.estimate;
      bundle = build_adjoints(in, sde, cost, system, aopts);
      have_bundle = true;
    }

    auto gradient = hamiltonian_gradient(eval_ens, eval_states, sde, cost, bundle);
    project_gradient(gradient, policy.observables, {&eval_ens, &eval_states});
    auto crit = criticality_score(gradient, grid);

    // Parameter gradient: E[ int proj(dH/du) . du/dtheta dt ].
    std::vector<double> g_theta(n_theta, 0.0);
    {
      const double dt = grid.dt();
      std::vector<double> jac(static_cast<std::size_t>(n_theta) * n_theta);
      std::vector<double> acc(n_theta, 0.0);
      for (int p = 0; p < eval_ens.n_paths; ++p) {
        for (int k = 0; k < grid.n_steps; ++k) {
          policy.du_dtheta(
              ObsArgs{grid.t(k), p, k, eval_states.state(p, k), &eval_ens}, jac);
          for (int i = 0; i < n_theta; ++i) {
            const double gi = gradient.proj(p, k, i);
            for (int j2 = 0; j2 < n_theta; ++j2)
              acc[j2] += gi * jac[static_cast<std::size_t>(i) * n_theta + j2] * dt;
          }
        }
      }
      for (int j2 = 0; j2 < n_theta; ++j2) g_theta[j2] = acc[j2] / eval_ens.n_paths;
    }
    for (double g : g_theta)
      if (!std::isfinite(g)) throw std::runtime_error("optimize_policy: non-finite gradient");

    const double gamma = cfg.step0 / (1.0 + m / cfg.decay_iters);
    TraceRow row;
    row.iter = m;
    row.theta = policy.theta;
    row.j_estimate = j.value;
    row.j_se = j.se;
    row.score = crit.score;
    row.step_size = gamma;
    result.trace.push_back(row);
    result.final_criticality = crit;

    if (crit.score < cfg.tolerance) {
      result.termination = "tolerance";
      return result;
    }
    for (int j2 = 0; j2 < n_theta; ++j2) policy.theta[j2] += gamma * g_theta[j2];
    policy.control_box.clamp(policy.theta);
  }
  result.termination = "max_iter";
  return result;
}

}  // namespace stomax
