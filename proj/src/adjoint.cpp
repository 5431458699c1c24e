#include "stomax/adjoint.hpp"

#include <cmath>

#include "stomax/parallel.hpp"

namespace stomax {
namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw AdmissibilityError(std::string("adjoint: non-finite proxy ") + what);
}

// Targets xi_a per anchor on the fit side; returns the per-anchor fields
// plus their evaluation-side fitted values.
void anchored_fields(const PathEnsemble& fit_ens, const StatePaths* fit_states,
                     const PathEnsemble& eval_ens, const StatePaths* eval_states,
                     const std::vector<double>& fit_targets,  // n_fit_paths x n_anchors
                     const std::vector<int>& anchors, int anchor_width, int n_marks,
                     const BasisSpec& basis, const EstimateOptions& opts,
                     std::vector<DerivativeField>& fields,
                     std::vector<std::vector<double>>& values) {
  const int n_fit = fit_ens.n_paths;
  const auto n_anchors = anchors.size();
  fields.clear();
  values.clear();
  fields.reserve(n_anchors);
  values.reserve(n_anchors);

  for (std::size_t a = 0; a < n_anchors; ++a) {
    std::vector<Cell> cells;
    cells.reserve(n_marks);
    for (int z = 0; z < n_marks; ++z)
      cells.emplace_back(anchors[a], anchors[a] + anchor_width, z);

    TargetVariable target;
    target.values.resize(n_fit);
    for (int p = 0; p < n_fit; ++p)
      target.values[p] = fit_targets[static_cast<std::size_t>(p) * n_anchors + a];

    auto field =
        estimate_derivative_cells(fit_ens, target, std::move(cells), basis, fit_states, opts);
    values.push_back(field.evaluate({&eval_ens, eval_states}));
    fields.push_back(std::move(field));
  }
}

}  // namespace

std::vector<double> compute_K_values(const PathEnsemble& ens, const StatePaths& states,
                                     const CostSpec& cost) {
  const int K = ens.grid.n_steps;
  const double dt = ens.grid.dt();
  std::vector<double> out(static_cast<std::size_t>(ens.n_paths) * (K + 1));
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      double* row = out.data() + static_cast<std::size_t>(p) * (K + 1);
      double acc = cost.terminal_dx(states.state(p, K));
      row[K] = acc;
      for (int k = K - 1; k >= 0; --k) {
        if (cost.has_running()) {
          CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
          acc += cost.running_dx(args) * dt;
        }
        row[k] = acc;
      }
    }
  });
  return out;
}

std::vector<double> compute_F_values(const PathEnsemble& ens, const StatePaths& states,
                                     const ControlledSDESpec& sde, const std::vector<double>& K,
                                     const std::vector<std::vector<double>>& dK_values,
                                     int anchor_width) {
  const int n_steps = ens.grid.n_steps;
  const int M = ens.marks.size();
  const double dt = ens.grid.dt();
  std::vector<double> out(static_cast<std::size_t>(ens.n_paths) * n_steps);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      for (int k = 0; k < n_steps; ++k) {
        CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
        double f = K[static_cast<std::size_t>(p) * (n_steps + 1) + k] * sde.drift_dx(args);
        const auto& dk = dK_values[k / anchor_width];
        for (int z = 0; z < M; ++z)
          f += dk[static_cast<std::size_t>(z) * ens.n_paths + p] * sde.jump_dx(z, args) *
               ens.lambda(p, k, z);
        out[static_cast<std::size_t>(p) * n_steps + k] = f;
      }
    }
  });
  return out;
}

std::vector<double> compute_p_values(const PathEnsemble& ens, const StatePaths& states,
                                     const ControlledSDESpec& sde, const std::vector<double>& K,
                                     const std::vector<double>& F,
                                     const std::vector<int>& anchors) {
  const int n_steps = ens.grid.n_steps;
  const int M = ens.marks.size();
  const double dt = ens.grid.dt();
  const auto n_anchors = anchors.size();
  std::vector<double> out(static_cast<std::size_t>(ens.n_paths) * n_anchors);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      for (std::size_t a = 0; a < n_anchors; ++a) {
        const int start = anchors[a];
        double g = 1.0, acc = 0.0;
        for (int k = start; k < n_steps; ++k) {
          acc += F[static_cast<std::size_t>(p) * n_steps + k] * g * dt;
          CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
          double factor = 1.0 + sde.drift_dx(args) * dt;
          for (int z = 0; z < M; ++z) factor += sde.jump_dx(z, args) * ens.incr(p, k, z);
          g *= factor;
        }
        out[static_cast<std::size_t>(p) * n_anchors + a] =
            K[static_cast<std::size_t>(p) * (n_steps + 1) + start] + acc;
      }
    }
  });
  return out;
}

AdjointBundle build_adjoints(const AdjointInputs& in, const ControlledSDESpec& sde,
                             const CostSpec& cost, const DissectingSystem& system,
                             const AdjointOptions& opts) {
  if (!in.eval_ens || !in.eval_states)
    throw std::invalid_argument("build_adjoints: evaluation ensemble/states required");
  const PathEnsemble& eval_ens = *in.eval_ens;
  const StatePaths& eval_states = *in.eval_states;
  const PathEnsemble& fit_ens = in.fit_ens ? *in.fit_ens : eval_ens;
  const StatePaths& fit_states = in.fit_states ? *in.fit_states : eval_states;
  if (opts.level < 0 || opts.level > system.max_level)
    throw std::invalid_argument("build_adjoints: level outside the system");

  AdjointBundle b;
  b.level = opts.level;
  b.anchors = system.anchor_steps(opts.level);
  b.anchor_width = eval_ens.grid.n_steps / (1 << opts.level);
  b.n_paths = eval_ens.n_paths;
  b.n_steps = eval_ens.grid.n_steps;
  b.n_marks = eval_ens.marks.size();

  b.K = compute_K_values(eval_ens, eval_states, cost);
  auto K_fit = in.fit_ens ? compute_K_values(fit_ens, fit_states, cost) : b.K;

  // Integrability proxies.
  {
    const int K = b.n_steps;
    const double dt = eval_ens.grid.dt();
    std::vector<double> gsq(b.n_paths), fsq(b.n_paths, 0.0), cost_sq(b.n_paths, 0.0);
    for (int p = 0; p < b.n_paths; ++p) {
      const double g = cost.terminal_dx(eval_states.state(p, K));
      gsq[p] = g * g;
      const double gterm = cost.terminal(eval_states.state(p, K));
      cost_sq[p] = gterm * gterm;
      if (cost.has_running()) {
        for (int k = 0; k < K; ++k) {
          CoeffArgs args{eval_ens.grid.t(k), dt,  p, k, eval_states.state(p, k),
                         eval_states.control(p, k), &eval_ens};
          const double fx = cost.running_dx(args);
          fsq[p] += fx * fx * dt;
          const double f = cost.running(args);
          cost_sq[p] += f * f * dt;
        }
      }
    }
    b.proxies.terminal_grad_sq = stats::mean(gsq);
    b.proxies.running_grad_sq = stats::mean(fsq);
    b.proxies.cost_sq = stats::mean(cost_sq);
    check_finite(b.proxies.terminal_grad_sq, "E[g'(X_T)^2]");
    check_finite(b.proxies.running_grad_sq, "E[int (df/dx)^2 dt]");
    check_finite(b.proxies.cost_sq, "E[int f^2 dt + g^2]");
    const auto half = std::span<const double>(gsq).subspan(0, b.n_paths / 2);
    const double mh = stats::mean(half);
    b.proxies.half_sample_ratio =
        b.proxies.terminal_grad_sq > 0 ? mh / b.proxies.terminal_grad_sq : 1.0;
  }

  // Diagonal dK fields: target K_{t_a} per anchor, fitted on the fit side.
  {
    std::vector<double> targets(static_cast<std::size_t>(fit_ens.n_paths) * b.anchors.size());
    for (int p = 0; p < fit_ens.n_paths; ++p)
      for (std::size_t a = 0; a < b.anchors.size(); ++a)
        targets[static_cast<std::size_t>(p) * b.anchors.size() + a] =
            K_fit[static_cast<std::size_t>(p) * (b.n_steps + 1) + b.anchors[a]];
    anchored_fields(fit_ens, &fit_states, eval_ens, &eval_states, targets, b.anchors,
                    b.anchor_width, b.n_marks, opts.basis, opts.estimate, b.dK_fields,
                    b.dK_values);
  }

  b.F = compute_F_values(eval_ens, eval_states, sde, b.K, b.dK_values, b.anchor_width);
  b.p = compute_p_values(eval_ens, eval_states, sde, b.K, b.F, b.anchors);

  // FG proxy at t = 0.
  {
    const double dt = eval_ens.grid.dt();
    std::vector<double> acc(b.n_paths, 0.0);
    auto g0 = first_variation(eval_ens, sde, eval_states, 0);
    for (int p = 0; p < b.n_paths; ++p) {
      const double* g = g0.data() + static_cast<std::size_t>(p) * (b.n_steps + 1);
      for (int k = 0; k < b.n_steps; ++k) {
        const double fg = b.F_at(p, k) * g[k];
        acc[p] += fg * fg * dt;
      }
    }
    b.proxies.fg_product_sq = stats::mean(acc);
    check_finite(b.proxies.fg_product_sq, "E[int (F G)^2 dt]");
  }

  // kappa fields: target p_{t_a} per anchor, fitted on the fit side.
  {
    std::vector<double> p_fit;
    if (in.fit_ens) {
      std::vector<std::vector<double>> dK_fit_values;
      dK_fit_values.reserve(b.dK_fields.size());
      for (const auto& f : b.dK_fields) dK_fit_values.push_back(f.fitted);
      auto F_fit =
          compute_F_values(fit_ens, fit_states, sde, K_fit, dK_fit_values, b.anchor_width);
      p_fit = compute_p_values(fit_ens, fit_states, sde, K_fit, F_fit, b.anchors);
    } else {
      p_fit = b.p;
    }
    anchored_fields(fit_ens, &fit_states, eval_ens, &eval_states, p_fit, b.anchors,
                    b.anchor_width, b.n_marks, opts.basis, opts.estimate, b.kappa_fields,
                    b.kappa_values);
  }
  return b;
}

}  // namespace stomax
