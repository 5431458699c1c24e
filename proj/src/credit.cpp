#include "stomax/credit.hpp"

#include <cmath>
#include <string>

#include "stomax/parallel.hpp"

namespace stomax {

double UtilitySpec::value(double x) const {
  switch (kind) {
    case Kind::Log:
      return std::log(x);
    case Kind::Power:
      return std::pow(x, gamma) / gamma;
    case Kind::Custom:
      return custom_u(x);
  }
  return 0.0;
}

double UtilitySpec::grad(double x) const {
  switch (kind) {
    case Kind::Log:
      return 1.0 / x;
    case Kind::Power:
      return std::pow(x, gamma - 1.0);
    case Kind::Custom:
      return custom_du(x);
  }
  return 0.0;
}

double UtilitySpec::curv(double x) const {
  switch (kind) {
    case Kind::Log:
      return -1.0 / (x * x);
    case Kind::Power:
      return (gamma - 1.0) * std::pow(x, gamma - 2.0);
    case Kind::Custom:
      return custom_d2u(x);
  }
  return 0.0;
}

UtilitySpec UtilitySpec::log_utility() { return UtilitySpec{}; }

UtilitySpec UtilitySpec::power_utility(double gamma) {
  if (!(gamma > 0.0) || !(gamma < 1.0))
    throw std::invalid_argument("power utility needs gamma in (0,1)");
  UtilitySpec u;
  u.kind = Kind::Power;
  u.gamma = gamma;
  return u;
}

DefaultState extract_default_times(const PathEnsemble& raw) {
  if (!raw.has_counts)
    throw std::invalid_argument("extract_default_times: counting model required");
  const int K = raw.grid.n_steps;
  const int M = raw.marks.size();
  DefaultState ds;
  ds.n_paths = raw.n_paths;
  ds.n_steps = K;
  ds.first_jump.assign(static_cast<std::size_t>(raw.n_paths) * M, K);
  for (int p = 0; p < raw.n_paths; ++p)
    for (int z = 0; z < M; ++z)
      for (int k = 0; k < K; ++k)
        if (raw.count(p, k, z) > 0.0) {
          ds.first_jump[static_cast<std::size_t>(p) * M + z] = k;
          break;
        }
  return ds;
}

PathEnsemble stop_at_first_jump(const PathEnsemble& raw) {
  if (!raw.has_counts)
    throw std::invalid_argument("stop_at_first_jump: counting model required");
  PathEnsemble out = raw;
  out.model_tag = raw.model_tag + "_stopped";
  out.allow_zero_intensity = true;
  const int K = raw.grid.n_steps;
  const int M = raw.marks.size();
  const double dt = raw.grid.dt();
  parallel_for(raw.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p)
      for (int z = 0; z < M; ++z) {
        bool alive = true;
        for (int k = 0; k < K; ++k) {
          const std::size_t i = raw.idx(p, k, z);
          if (!alive) {
            out.counts[i] = 0.0;
            out.intensity[i] = 0.0;
            out.increments[i] = 0.0;
            continue;
          }
          const double jump = raw.counts[i] > 0.0 ? 1.0 : 0.0;
          out.counts[i] = jump;
          out.intensity[i] = raw.intensity[i];
          out.increments[i] = jump - raw.intensity[i] * dt;
          if (jump > 0.0) alive = false;
        }
      }
  });
  return out;
}

namespace {

// Alive while the stopped field still carries intensity.
inline bool alive_at(const PathEnsemble& ens, int p, int k, int z) {
  return ens.lambda(p, k, z) > 0.0;
}

}  // namespace

CreditMarket build_credit_market(const CreditMarketSpec& spec) {
  const int n = static_cast<int>(spec.rho.size());
  if (n == 0) throw std::invalid_argument("credit market: need at least one asset");
  if (!(spec.x0 > 0.0)) throw std::invalid_argument("credit market: initial wealth must be positive");
  for (double r : spec.rho)
    if (!std::isfinite(r)) throw std::invalid_argument("credit market: returns must be bounded");
  if (spec.intensity_model.kind == NoiseKind::Brownian)
    throw std::invalid_argument("credit market: intensity model must be a counting model");
  const int model_marks = spec.intensity_model.kind == NoiseKind::CompensatedPoisson
                              ? static_cast<int>(spec.intensity_model.intensities.size())
                              : static_cast<int>(spec.intensity_model.drivers.size());
  if (model_marks != n)
    throw std::invalid_argument("credit market: one intensity per asset required");

  // Probe the utility: strictly increasing and strictly concave.
  for (double x : {0.25 * spec.x0, spec.x0, 4.0 * spec.x0}) {
    if (!(spec.utility.grad(x) > 0.0))
      throw std::invalid_argument("credit market: utility must be increasing");
    if (!(spec.utility.curv(x) < 0.0))
      throw std::invalid_argument("credit market: utility must be strictly concave");
  }

  CreditMarket mkt;
  mkt.spec = spec;
  mkt.marks = MarkSpace::range(n);

  const std::vector<double> rho = spec.rho;
  ControlledSDESpec sde;
  sde.x0 = spec.x0;
  sde.n_ctrl = n;
  sde.drift = [rho, n](const CoeffArgs& a) {
    double b = 0.0;
    for (int z = 0; z < n; ++z)
      if (alive_at(*a.ens, a.path, a.step, z)) b += a.u[z] * rho[z];
    return b;
  };
  sde.drift_dx = [](const CoeffArgs&) { return 0.0; };
  sde.drift_du = [rho, n](const CoeffArgs& a, std::span<double> g) {
    for (int z = 0; z < n; ++z)
      g[z] = alive_at(*a.ens, a.path, a.step, z) ? rho[z] : 0.0;
  };
  sde.jump = [](int z, const CoeffArgs& a) {
    return alive_at(*a.ens, a.path, a.step, z) ? -a.u[z] : 0.0;
  };
  sde.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
  sde.jump_du = [n](int z, const CoeffArgs& a, std::span<double> g) {
    for (int j = 0; j < n; ++j) g[j] = 0.0;
    g[z] = alive_at(*a.ens, a.path, a.step, z) ? -1.0 : 0.0;
  };
  mkt.sde = std::move(sde);

  const UtilitySpec util = spec.utility;
  CostSpec cost;
  cost.terminal = [util](double x) { return util.value(x); };
  cost.terminal_dx = [util](double x) { return util.grad(x); };
  mkt.cost = std::move(cost);
  return mkt;
}

PathEnsemble CreditMarket::make_ensemble(const TimeGrid& grid, int n_paths,
                                         std::uint64_t seed) const {
  auto raw = sample_ensemble(spec.intensity_model, grid, marks, n_paths, seed);
  return stop_at_first_jump(raw);
}

EnsembleFactory CreditMarket::factory(const TimeGrid& grid) const {
  return [this, grid](std::uint64_t seed, int n_paths) {
    return make_ensemble(grid, n_paths, seed);
  };
}

ControlPolicy proportion_policy(std::vector<double> pi, double margin_frac) {
  ControlPolicy p;
  p.kind = ControlPolicy::Kind::ProportionalWealth;
  p.theta = std::move(pi);
  p.control_box.lo.assign(p.theta.size(), 0.0);
  p.control_box.hi.assign(p.theta.size(), 1.0);
  p.control_box.margin_frac = margin_frac;
  return p;
}

double analytic_log_optimum(double rho, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("analytic_log_optimum: lambda must be positive");
  if (rho < 0.0) throw std::invalid_argument("analytic_log_optimum: rho must be non-negative");
  return rho / (rho + lambda);
}

PerformanceRecord estimate_performance(const PathEnsemble& ens, const CreditMarket& market,
                                       const StatePaths& states) {
  const int K = ens.grid.n_steps;
  const int n = ens.n_paths;
  std::vector<double> u(n), usq(n), msq(n);
  for (int p = 0; p < n; ++p) {
    const double xT = states.state(p, K);
    if (market.spec.utility.needs_positive_wealth() && !(xT > 0.0))
      throw DomainError("estimate_performance: terminal wealth outside the utility domain at path " +
                        std::to_string(p));
    const double v = market.spec.utility.value(xT);
    const double m = market.spec.utility.grad(xT);
    u[p] = v;
    usq[p] = v * v;
    msq[p] = m * m;
  }
  PerformanceRecord rec;
  const auto ms = stats::mean_se(u);
  rec.j = ms.value;
  rec.se = ms.se;
  rec.utility_sq = stats::mean(usq);
  rec.marginal_sq = stats::mean(msq);
  return rec;
}

PerformanceRecord estimate_performance(const PathEnsemble& ens, const CreditMarket& market,
                                       const ControlPolicy& policy) {
  auto states = simulate_state(ens, market.sde, policy);
  return estimate_performance(ens, market, states);
}

ResidualRecord corollary_residual(const PathEnsemble& ens, const CreditMarket& market,
                                  const StatePaths& states, const AdjointBundle& bundle) {
  const int K = ens.grid.n_steps;
  const int M = ens.marks.size();
  const int n = ens.n_paths;
  const double dt = ens.grid.dt();

  ResidualRecord rec;
  rec.n_steps = K;
  rec.n_assets = M;

  // Per-path aggregate: sum_t sum_z 1_alive (rho_z U'(X_T) - kappa lambda) dt.
  // U'(X_T) replaces its own F_t-projection (same expectation by the tower
  // rule, alive is F_t-measurable), which keeps the estimator unbiased
  // without a second regression pass.
  std::vector<double> per_path(n, 0.0);
  for (int p = 0; p < n; ++p) {
    const double uprime = market.spec.utility.grad(states.state(p, K));
    double acc = 0.0;
    for (int k = 0; k < K; ++k)
      for (int z = 0; z < M; ++z) {
        const double lam = ens.lambda(p, k, z);  // already 0 after default
        if (lam <= 0.0) continue;
        acc += (market.spec.rho[z] * uprime - bundle.kappa_at(p, k, z) * lam) * dt;
      }
    per_path[p] = acc;
  }
  const auto ms = stats::mean_se(per_path);
  rec.aggregate = ms.value;
  rec.se = ms.se;

  // Per-step profile with the conditional expectation realized by the
  // policy's observable projection.
  std::vector<double> uprime_vals(n);
  for (int p = 0; p < n; ++p)
    uprime_vals[p] = market.spec.utility.grad(states.state(p, K));
  std::vector<double> flat(static_cast<std::size_t>(n) * K);
  for (int p = 0; p < n; ++p)
    for (int k = 0; k < K; ++k) flat[static_cast<std::size_t>(p) * K + k] = uprime_vals[p];
  BasisSpec obs = BasisSpec::polynomial({{FeatureKind::Alive, -1}}, 1);
  auto projected = conditional_projection(flat, n, K, obs, {&ens, &states});

  rec.profile.assign(static_cast<std::size_t>(K) * M, 0.0);
  for (int k = 0; k < K; ++k)
    for (int z = 0; z < M; ++z) {
      double acc = 0.0;
      int alive_count = 0;
      for (int p = 0; p < n; ++p) {
        const double lam = ens.lambda(p, k, z);
        if (lam <= 0.0) continue;
        acc += market.spec.rho[z] * projected[static_cast<std::size_t>(p) * K + k] -
               bundle.kappa_at(p, k, z) * lam;
        ++alive_count;
      }
      rec.profile[static_cast<std::size_t>(k) * M + z] =
          alive_count > 0 ? acc / alive_count : 0.0;
    }
  return rec;
}

std::vector<ProportionGridPoint> scan_proportions(const CreditMarket& market,
                                                  const TimeGrid& grid, int n_paths,
                                                  std::uint64_t seed,
                                                  const std::vector<double>& pis,
                                                  const AdjointOptions& adjoint_opts,
                                                  bool two_ensemble) {
  if (market.n_assets() != 1)
    throw std::invalid_argument("scan_proportions: single-asset scan only");
  auto ens = market.make_ensemble(grid, n_paths, seed);
  PathEnsemble fit_ens;
  if (two_ensemble) fit_ens = market.make_ensemble(grid, n_paths, seed ^ 0x9E3779B97F4A7C15ULL);
  auto system = build_dissecting_system(grid, ens.marks, adjoint_opts.level);

  std::vector<ProportionGridPoint> out;
  out.reserve(pis.size());
  for (double pi : pis) {
    auto policy = proportion_policy({pi});
    auto states = simulate_state(ens, market.sde, policy);
    ProportionGridPoint pt;
    pt.pi = pi;
    const auto perf = estimate_performance(ens, market, states);
    pt.j = perf.j;
    pt.j_se = perf.se;

    AdjointInputs in;
    in.eval_ens = &ens;
    in.eval_states = &states;
    StatePaths fit_states;
    if (two_ensemble) {
      fit_states = simulate_state(fit_ens, market.sde, policy);
      in.fit_ens = &fit_ens;
      in.fit_states = &fit_states;
    }
    auto bundle = build_adjoints(in, market.sde, market.cost, system, adjoint_opts);
    auto res = corollary_residual(ens, market, states, bundle);
    pt.residual = res.aggregate;
    pt.residual_se = res.se;
    out.push_back(pt);
  }
  return out;
}

}  // namespace stomax
