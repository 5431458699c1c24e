#include "stomax/state.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "stomax/parallel.hpp"

namespace stomax {

bool Box::inside(std::span<const double> v, bool with_margin) const {
  for (int j = 0; j < dim(); ++j) {
    const double m = with_margin ? margin(j) : 0.0;
    if (!(v[j] > lo[j] + m) || !(v[j] < hi[j] - m)) return false;
  }
  return true;
}

void Box::clamp(std::span<double> v) const {
  for (int j = 0; j < dim(); ++j) {
    const double m = margin(j);
    if (v[j] < lo[j] + m) v[j] = lo[j] + m;
    if (v[j] > hi[j] - m) v[j] = hi[j] - m;
  }
}

void ControlPolicy::value(const ObsArgs& a, std::span<double> u_out) const {
  switch (kind) {
    case Kind::Constant:
      for (std::size_t j = 0; j < theta.size(); ++j) u_out[j] = theta[j];
      break;
    case Kind::ProportionalWealth:
      for (std::size_t j = 0; j < theta.size(); ++j) u_out[j] = theta[j] * a.x;
      break;
  }
}

void ControlPolicy::du_dtheta(const ObsArgs& a, std::span<double> jac) const {
  const int n = n_ctrl();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      jac[static_cast<std::size_t>(i) * n + j] =
          (i == j) ? (kind == Kind::ProportionalWealth ? a.x : 1.0) : 0.0;
}

void ControlPolicy::to_policy_coords(std::span<const double> u, double x,
                                     std::span<double> out) const {
  for (std::size_t j = 0; j < theta.size(); ++j)
    out[j] = kind == Kind::ProportionalWealth ? (x != 0.0 ? u[j] / x : 0.0) : u[j];
}

bool ControlPolicy::value_in_set(std::span<const double> u, double x, bool with_margin) const {
  std::vector<double> pc(theta.size());
  to_policy_coords(u, x, pc);
  return control_box.inside(pc, with_margin);
}

Perturbation Perturbation::constant(int n_ctrl, double v) {
  Perturbation b;
  b.n_ctrl = n_ctrl;
  b.fn = [v](int, int, int) { return v; };
  return b;
}

Perturbation Perturbation::pulse(int n_ctrl, int component, int step_lo, int step_hi,
                                 std::function<double(int)> alpha) {
  Perturbation b;
  b.n_ctrl = n_ctrl;
  b.fn = [=](int p, int k, int j) {
    if (j != component || k < step_lo || k >= step_hi) return 0.0;
    return alpha(p);
  };
  return b;
}

namespace {

[[noreturn]] void throw_nonfinite(int path, int step) {
  throw std::runtime_error("simulate_state: non-finite state at path " + std::to_string(path) +
                           ", step " + std::to_string(step));
}

template <class ControlFn>
StatePaths euler_run(const PathEnsemble& ens, const ControlledSDESpec& sde, ControlFn control) {
  const int K = ens.grid.n_steps;
  const int M = ens.marks.size();
  const double dt = ens.grid.dt();

  StatePaths out;
  out.n_paths = ens.n_paths;
  out.n_steps = K;
  out.n_ctrl = sde.n_ctrl;
  out.x.resize(static_cast<std::size_t>(ens.n_paths) * (K + 1));
  out.u.resize(static_cast<std::size_t>(ens.n_paths) * K * sde.n_ctrl);

  std::atomic<long long> bad{-1};  // packs (path, step) of the first failure
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      double x = sde.x0;
      out.state(p, 0) = x;
      for (int k = 0; k < K; ++k) {
        auto u = out.control(p, k);
        control(p, k, x, u);
        CoeffArgs args{ens.grid.t(k), dt, p, k, x, u, &ens};
        double next = x + sde.drift(args) * dt;
        for (int z = 0; z < M; ++z) next += sde.jump(z, args) * ens.incr(p, k, z);
        if (!std::isfinite(next)) {
          long long expected = -1;
          bad.compare_exchange_strong(expected,
                                      static_cast<long long>(p) * 1000000 + k);
          return;
        }
        x = next;
        out.state(p, k + 1) = x;
      }
    }
  });
  if (bad.load() >= 0)
    throw_nonfinite(static_cast<int>(bad.load() / 1000000), static_cast<int>(bad.load() % 1000000));
  return out;
}

}  // namespace

StatePaths simulate_state(const PathEnsemble& ens, const ControlledSDESpec& sde,
                          const ControlPolicy& policy) {
  if (policy.n_ctrl() != sde.n_ctrl)
    throw std::invalid_argument("simulate_state: policy/sde control dimension mismatch");
  return euler_run(ens, sde, [&](int p, int k, double x, std::span<double> u) {
    policy.value(ObsArgs{ens.grid.t(k), p, k, x, &ens}, u);
  });
}

StatePaths simulate_state(const PathEnsemble& ens, const ControlledSDESpec& sde,
                          const StatePaths& base_controls, const Perturbation& beta, double y) {
  if (base_controls.n_ctrl != sde.n_ctrl)
    throw std::invalid_argument("simulate_state: control dimension mismatch");
  return euler_run(ens, sde, [&](int p, int k, double, std::span<double> u) {
    auto base = base_controls.control(p, k);
    for (int j = 0; j < sde.n_ctrl; ++j) u[j] = base[j] + y * beta(p, k, j);
  });
}

std::vector<double> first_variation(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                    const StatePaths& states, int anchor) {
  const int K = ens.grid.n_steps;
  const int M = ens.marks.size();
  const double dt = ens.grid.dt();
  if (anchor < 0 || anchor > K) throw std::invalid_argument("first_variation: anchor outside grid");
  const int len = K - anchor + 1;

  std::vector<double> out(static_cast<std::size_t>(ens.n_paths) * len);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      double* g = out.data() + static_cast<std::size_t>(p) * len;
      g[0] = 1.0;
      for (int k = anchor; k < K; ++k) {
        CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
        double factor = 1.0 + sde.drift_dx(args) * dt;
        for (int z = 0; z < M; ++z) factor += sde.jump_dx(z, args) * ens.incr(p, k, z);
        g[k - anchor + 1] = g[k - anchor] * factor;
      }
    }
  });
  return out;
}

std::vector<double> variation_process(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                      const ControlPolicy& policy, const StatePaths& states,
                                      const Perturbation& beta) {
  const int K = ens.grid.n_steps;
  const int M = ens.marks.size();
  const int nc = sde.n_ctrl;
  const double dt = ens.grid.dt();

  std::vector<double> out(static_cast<std::size_t>(ens.n_paths) * (K + 1));
  std::atomic<bool> exits{false};
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    std::vector<double> b(nc), grad(nc), shifted(nc);
    for (int p = lo; p < hi; ++p) {
      double* ypath = out.data() + static_cast<std::size_t>(p) * (K + 1);
      double y = 0.0;
      ypath[0] = 0.0;
      for (int k = 0; k < K; ++k) {
        const double x = states.state(p, k);
        auto u = states.control(p, k);
        for (int j = 0; j < nc; ++j) b[j] = beta(p, k, j);
        for (int sgn : {-1, 1}) {
          for (int j = 0; j < nc; ++j) shifted[j] = u[j] + sgn * b[j];
          if (!policy.value_in_set(shifted, x, false)) exits.store(true);
        }
        CoeffArgs args{ens.grid.t(k), dt, p, k, x, u, &ens};
        double dy = sde.drift_dx(args) * y * dt;
        sde.drift_du(args, grad);
        for (int j = 0; j < nc; ++j) dy += grad[j] * b[j] * dt;
        for (int z = 0; z < M; ++z) {
          const double m = ens.incr(p, k, z);
          if (m == 0.0) continue;
          double jump_term = sde.jump_dx(z, args) * y;
          sde.jump_du(z, args, grad);
          for (int j = 0; j < nc; ++j) jump_term += grad[j] * b[j];
          dy += jump_term * m;
        }
        y += dy;
        ypath[k + 1] = y;
      }
    }
  });
  if (exits.load())
    throw std::runtime_error("variation_process: perturbation leaves the control set");
  return out;
}

stats::MeanSE gateaux_derivative(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                 const CostSpec& cost, const ControlPolicy& policy,
                                 const StatePaths& states, const Perturbation& beta) {
  const int K = ens.grid.n_steps;
  const int nc = sde.n_ctrl;
  const double dt = ens.grid.dt();
  auto y = variation_process(ens, sde, policy, states, beta);

  std::vector<double> vals(ens.n_paths);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    std::vector<double> grad(nc);
    for (int p = lo; p < hi; ++p) {
      const double* ypath = y.data() + static_cast<std::size_t>(p) * (K + 1);
      double acc = 0.0;
      if (cost.has_running()) {
        for (int k = 0; k < K; ++k) {
          CoeffArgs args{ens.grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
          double term = cost.running_dx(args) * ypath[k];
          cost.running_du(args, grad);
          for (int j = 0; j < nc; ++j) term += grad[j] * beta(p, k, j);
          acc += term * dt;
        }
      }
      acc += cost.terminal_dx(states.state(p, K)) * ypath[K];
      vals[p] = acc;
    }
  });
  return stats::mean_se(vals);
}

CoeffProbeReport validate_coefficients(const PathEnsemble& ens, const ControlledSDESpec& sde,
                                       const CostSpec& cost, const StatePaths& states,
                                       int n_probes) {
  CoeffProbeReport rep;
  const int nc = sde.n_ctrl;
  const int M = ens.marks.size();
  const double dt = ens.grid.dt();

  auto update = [&](double analytic, double numeric, const char* what) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / scale;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst = what;
    }
  };

  std::vector<double> up(nc), um(nc), grad(nc);
  for (int probe = 0; probe < n_probes; ++probe) {
    const int p = (probe * 7919) % ens.n_paths;
    const int k = (probe * 104729) % ens.grid.n_steps;
    const double x = states.state(p, k);
    auto u = states.control(p, k);
    CoeffArgs args{ens.grid.t(k), dt, p, k, x, u, &ens};

    const double hx = 1e-5 * (1.0 + std::abs(x));
    CoeffArgs ap = args, am = args;
    ap.x = x + hx;
    am.x = x - hx;
    update(sde.drift_dx(args), (sde.drift(ap) - sde.drift(am)) / (2 * hx), "drift_dx");
    if (cost.has_running())
      update(cost.running_dx(args), (cost.running(ap) - cost.running(am)) / (2 * hx),
             "running_dx");
    for (int z = 0; z < M; ++z)
      update(sde.jump_dx(z, args), (sde.jump(z, ap) - sde.jump(z, am)) / (2 * hx), "jump_dx");
    update(cost.terminal_dx(x), (cost.terminal(x + hx) - cost.terminal(x - hx)) / (2 * hx),
           "terminal_dx");

    for (int j = 0; j < nc; ++j) {
      const double hu = 1e-5 * (1.0 + std::abs(u[j]));
      for (int i = 0; i < nc; ++i) up[i] = um[i] = u[i];
      up[j] += hu;
      um[j] -= hu;
      CoeffArgs aup = args, aum = args;
      aup.u = up;
      aum.u = um;
      sde.drift_du(args, grad);
      update(grad[j], (sde.drift(aup) - sde.drift(aum)) / (2 * hu), "drift_du");
      if (cost.has_running()) {
        cost.running_du(args, grad);
        update(grad[j], (cost.running(aup) - cost.running(aum)) / (2 * hu), "running_du");
      }
      for (int z = 0; z < M; ++z) {
        sde.jump_du(z, args, grad);
        update(grad[j], (sde.jump(z, aup) - sde.jump(z, aum)) / (2 * hu), "jump_du");
      }
    }
  }
  return rep;
}

}  // namespace stomax
