#include "stomax/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "stomax/credit.hpp"
#include "stomax/ensemble_io.hpp"
#include "stomax/parallel.hpp"

namespace stomax {
namespace {

namespace fs = std::filesystem;

CheckRecord within(const std::string& name, double value, double expected, double tol,
                   double se = 0.0) {
  CheckRecord c;
  c.name = name;
  c.value = value;
  c.expected = expected;
  c.tolerance = tol;
  c.se = se;
  c.pass = std::isfinite(value) && std::abs(value - expected) <= tol;
  return c;
}

CheckRecord exact(const std::string& name, double value, double expected) {
  CheckRecord c;
  c.name = name;
  c.value = value;
  c.expected = expected;
  c.exact = true;
  c.pass = value == expected;
  return c;
}

CheckRecord above(const std::string& name, double value, double bound) {
  CheckRecord c;
  c.name = name;
  c.value = value;
  c.expected = bound;
  c.tolerance = 0.0;
  c.pass = std::isfinite(value) && value > bound;
  return c;
}

NoiseModel make_noise_model(const ExperimentConfig& cfg) {
  if (cfg.noise_kind == "brownian") return NoiseModel::brownian();
  if (cfg.noise_kind == "compensated_poisson")
    return NoiseModel::compensated_poisson(cfg.intensities);
  if (cfg.noise_kind == "cox") {
    std::vector<CoxDriverParams> drivers;
    for (std::size_t z = 0; z < cfg.intensities.size(); ++z) {
      CoxDriverParams d;
      d.initial = cfg.cox_initial;
      d.mean_reversion = cfg.cox_mean_reversion;
      d.long_run = cfg.cox_long_run;
      d.vol = cfg.cox_vol;
      drivers.push_back(d);
    }
    return NoiseModel::doubly_stochastic(drivers);
  }
  throw ConfigError("unknown noise kind: " + cfg.noise_kind);
}

MarkSpace make_marks(const ExperimentConfig& cfg) {
  if (cfg.noise_kind == "brownian") return MarkSpace{};
  return MarkSpace::range(static_cast<int>(cfg.intensities.size()));
}

BasisSpec make_basis(const ExperimentConfig& cfg, const PathEnsemble& ens) {
  std::vector<FeatureSpec> vars;
  if (ens.has_counts) {
    vars.push_back({FeatureKind::RunningCount, -1});
    if (cfg.noise_kind == "cox") vars.push_back({FeatureKind::Intensity, -1});
  } else {
    vars.push_back({FeatureKind::RunningNoise, -1});
  }
  auto b = BasisSpec::polynomial(std::move(vars), cfg.basis_degree);
  b.ridge_rel = cfg.ridge;
  return b;
}

TargetVariable make_target(const ExperimentConfig& cfg, const PathEnsemble& ens) {
  TargetVariable t;
  t.values.resize(ens.n_paths);
  t.label = cfg.target;
  const int K = ens.grid.n_steps;
  if (cfg.target == "terminal_noise" || cfg.target == "terminal_noise_sq") {
    const Cell full(0, K, 0);
    for (int p = 0; p < ens.n_paths; ++p) {
      const double w = ens.cell_increment(p, full);
      t.values[p] = cfg.target == "terminal_noise" ? w : w * w;
    }
  } else if (cfg.target == "counts" || cfg.target == "counts_sq") {
    if (!ens.has_counts) throw ConfigError("target '" + cfg.target + "' needs a counting model");
    for (int p = 0; p < ens.n_paths; ++p) {
      const double h = ens.running_count(p, K, 0);
      t.values[p] = cfg.target == "counts" ? h : h * h;
    }
  } else if (cfg.target == "constant") {
    std::fill(t.values.begin(), t.values.end(), 1.0);
  } else if (cfg.target == "external") {
    t.values = external_gaussians(cfg.seed ^ 0xABCDEF, ens.n_paths);
  } else {
    throw ConfigError("unknown target kind: " + cfg.target);
  }
  return t;
}

std::function<double(int, int, int)> make_integrand(const ExperimentConfig& cfg,
                                                    const TimeGrid& grid) {
  if (cfg.integrand == "one") return [](int, int, int) { return 1.0; };
  if (cfg.integrand == "time") return [grid](int, int k, int) { return grid.t(k); };
  throw ConfigError("unknown integrand kind: " + cfg.integrand);
}

struct Problem {
  ControlledSDESpec sde;
  CostSpec cost;
  NoiseModel model;
  MarkSpace marks;
  ControlPolicy policy;          // policy at cfg.theta0
  double expected_optimum = 0.0;
  double optimum_tolerance = 0.02;
  bool score_vanishes_at_optimum = false;
  std::function<PathEnsemble(std::uint64_t, int)> factory;
  // Closed-form mean kappa at a constant control, when known (else NaN).
  std::function<double(double)> kappa_oracle;
};

ControlPolicy boxed_constant(double theta, double half_width, double margin) {
  ControlPolicy p;
  p.kind = ControlPolicy::Kind::Constant;
  p.theta = {theta};
  p.control_box.lo = {-half_width};
  p.control_box.hi = {half_width};
  p.control_box.margin_frac = margin;
  return p;
}

Problem make_problem(const ExperimentConfig& cfg, const TimeGrid& grid) {
  Problem pr;
  if (cfg.problem == "lq_drift") {
    // dX = u dt + dW, J = E[-X_T^2]; best constant control is 0 for x0 = 0.
    pr.model = NoiseModel::brownian();
    pr.marks = MarkSpace{};
    ControlledSDESpec s;
    s.x0 = 0.0;
    s.n_ctrl = 1;
    s.drift = [](const CoeffArgs& a) { return a.u[0]; };
    s.drift_dx = [](const CoeffArgs&) { return 0.0; };
    s.drift_du = [](const CoeffArgs&, std::span<double> g) { g[0] = 1.0; };
    s.jump = [](int, const CoeffArgs&) { return 1.0; };
    s.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
    s.jump_du = [](int, const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
    pr.sde = std::move(s);
    pr.cost.terminal = [](double x) { return -x * x; };
    pr.cost.terminal_dx = [](double x) { return -2.0 * x; };
    pr.policy = boxed_constant(cfg.theta0, 4.0, cfg.margin);
    pr.expected_optimum = 0.0;
    pr.optimum_tolerance = 0.01;
    pr.kappa_oracle = [](double) { return -2.0; };
    const auto model = pr.model;
    const auto marks = pr.marks;
    pr.factory = [model, marks, grid](std::uint64_t seed, int n) {
      return sample_ensemble(model, grid, marks, n, seed);
    };
  } else if (cfg.problem == "jump_control") {
    // dX = u dmu (compensated Poisson), J = E[-X_T^2]; optimum 0.
    pr.model = NoiseModel::compensated_poisson({cfg.intensities.at(0)});
    pr.marks = MarkSpace::range(1);
    ControlledSDESpec s;
    s.x0 = 0.0;
    s.n_ctrl = 1;
    s.drift = [](const CoeffArgs&) { return 0.0; };
    s.drift_dx = [](const CoeffArgs&) { return 0.0; };
    s.drift_du = [](const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
    s.jump = [](int, const CoeffArgs& a) { return a.u[0]; };
    s.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
    s.jump_du = [](int, const CoeffArgs&, std::span<double> g) { g[0] = 1.0; };
    pr.sde = std::move(s);
    pr.cost.terminal = [](double x) { return -x * x; };
    pr.cost.terminal_dx = [](double x) { return -2.0 * x; };
    pr.policy = boxed_constant(cfg.theta0, 4.0, cfg.margin);
    pr.expected_optimum = 0.0;
    pr.optimum_tolerance = 0.02;
    pr.score_vanishes_at_optimum = true;
    pr.kappa_oracle = [](double theta) { return -2.0 * theta; };
    const auto model = pr.model;
    const auto marks = pr.marks;
    pr.factory = [model, marks, grid](std::uint64_t seed, int n) {
      return sample_ensemble(model, grid, marks, n, seed);
    };
  } else if (cfg.problem == "credit") {
    CreditMarketSpec spec;
    spec.rho = {cfg.credit_rho};
    spec.intensity_model = NoiseModel::compensated_poisson({cfg.credit_intensity});
    spec.x0 = cfg.credit_x0;
    spec.utility = cfg.credit_utility == "power"
                       ? UtilitySpec::power_utility(cfg.credit_power_gamma)
                       : UtilitySpec::log_utility();
    auto market = build_credit_market(spec);
    pr.model = market.spec.intensity_model;
    pr.marks = market.marks;
    pr.sde = market.sde;
    pr.cost = market.cost;
    pr.policy = proportion_policy({cfg.theta0}, cfg.margin);
    pr.expected_optimum = analytic_log_optimum(cfg.credit_rho, cfg.credit_intensity);
    pr.optimum_tolerance = 0.02;
    pr.score_vanishes_at_optimum = true;
    pr.factory = market.factory(grid);
  } else {
    throw ConfigError("unknown problem kind: " + cfg.problem);
  }
  return pr;
}

BasisSpec problem_basis(const ExperimentConfig& cfg, const Problem& pr) {
  std::vector<FeatureSpec> vars;
  if (cfg.problem == "credit") {
    vars.push_back({FeatureKind::Alive, -1});
    vars.push_back({FeatureKind::InverseState, -1});
    auto b = BasisSpec::polynomial(std::move(vars), 1);
    b.ridge_rel = cfg.ridge;
    return b;
  }
  if (pr.model.counting())
    vars.push_back({FeatureKind::RunningCount, -1});
  else
    vars.push_back({FeatureKind::RunningNoise, -1});
  vars.push_back({FeatureKind::State, -1});
  auto b = BasisSpec::polynomial(std::move(vars), cfg.basis_degree);
  b.ridge_rel = cfg.ridge;
  return b;
}

OptimizeConfig make_opt_config(const ExperimentConfig& cfg, const BasisSpec& basis) {
  OptimizeConfig oc;
  oc.max_iter = cfg.opt_max_iter;
  oc.step0 = cfg.opt_step0;
  oc.decay_iters = cfg.opt_decay_iters;
  oc.refit_period = cfg.opt_refit_period;
  oc.tolerance = cfg.opt_tolerance;
  oc.n_paths = cfg.paths;
  oc.seed = cfg.seed;
  oc.two_ensemble = cfg.two_ensemble;
  oc.level = cfg.level;
  oc.basis = basis;
  return oc;
}

std::string artifacts_dir(const ExperimentConfig& cfg) {
  const auto dir = fs::path(cfg.out_dir) / "artifacts";
  fs::create_directories(dir);
  return dir.string();
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream os(path);
  os.precision(17);
  os << "iter,theta,j_estimate,j_se,score,step_size\n";
  for (const auto& r : trace) {
    os << r.iter << ',';
    for (std::size_t j = 0; j < r.theta.size(); ++j) os << (j ? ";" : "") << r.theta[j];
    os << ',' << r.j_estimate << ',' << r.j_se << ',' << r.score << ',' << r.step_size << '\n';
  }
}

// ---- pipelines ----------------------------------------------------------

void run_validate_noise(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto marks = make_marks(cfg);
  auto ens = sample_ensemble(make_noise_model(cfg), grid, marks, cfg.paths, cfg.seed);
  auto sys = build_dissecting_system(grid, marks, cfg.level);
  auto suite = field_property_suite(ens, sys.cells_at(cfg.level));

  rep.checks.push_back(
      within("martingale_mean_fraction_within_4z", suite.fraction_mean_within(4.0), 1.0, 0.01));
  rep.checks.push_back(
      within("orthogonality_fraction_within_4z", suite.fraction_pairs_within(4.0), 1.0, 0.01));
  if (ens.has_counts)
    rep.checks.push_back(exact("additivity_max_residual", suite.max_additivity_residual, 0.0));
  else
    rep.checks.push_back(within("additivity_max_residual", suite.max_additivity_residual, 0.0,
                                1e-12));
  rep.checks.push_back(within("isometry_max_abs_z", suite.max_abs_iso_z, 0.0, 4.0));

  // Integral isometry for the configured integrand.
  auto kappa = make_integrand(cfg, grid);
  auto integral = stochastic_integral(ens, kappa);
  std::vector<double> diff(ens.n_paths);
  const double dt = grid.dt();
  for (int p = 0; p < ens.n_paths; ++p) {
    double lam_sum = 0.0;
    for (int k = 0; k < grid.n_steps; ++k)
      for (int z = 0; z < marks.size(); ++z) {
        const double kv = kappa(p, k, z);
        lam_sum += kv * kv * ens.lambda(p, k, z) * dt;
      }
    diff[p] = integral[p] * integral[p] - lam_sum;
  }
  const auto ms = stats::mean_se(diff);
  rep.checks.push_back(within("integral_isometry_gap", ms.value, 0.0, 4.0 * ms.se, ms.se));

  const auto dir = artifacts_dir(cfg);
  const auto bin = dir + "/ensemble.bin";
  write_ensemble_binary(ens, bin);
  rep.artifacts.emplace_back("ensemble_binary", bin);
  if (static_cast<long long>(ens.increments.size()) <= 200000) {
    const auto csv = dir + "/ensemble.csv";
    write_ensemble_csv(ens, csv);
    rep.artifacts.emplace_back("ensemble_csv", csv);
  }
}

void run_dissect_check(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto marks = make_marks(cfg);
  auto ens = sample_ensemble(make_noise_model(cfg), grid, marks, cfg.paths, cfg.seed);
  auto sys = build_dissecting_system(grid, marks, cfg.level);
  auto ver = verify_system(sys, ens);
  rep.checks.push_back(exact("structure_exact", ver.structure_ok ? 1.0 : 0.0, 1.0));
  rep.checks.push_back(exact("mesh_within_bounds", ver.mesh_within_bounds ? 1.0 : 0.0, 1.0));
  rep.checks.push_back(
      exact("empirical_variance_decreasing", ver.variance_decreasing ? 1.0 : 0.0, 1.0));
  for (const auto& lr : ver.levels)
    rep.checks.push_back(within("variance_bound_level_" + std::to_string(lr.level),
                                lr.max_empirical_variance, 0.0, lr.variance_bound));

  const auto dir = artifacts_dir(cfg);
  const auto path = dir + "/cells.txt";
  std::ofstream os(path);
  os << dump_cells(sys);
  rep.artifacts.emplace_back("cells", path);
}

void run_derivative_oracle(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto marks = make_marks(cfg);
  auto ens = sample_ensemble(make_noise_model(cfg), grid, marks, cfg.paths, cfg.seed);
  auto sys = build_dissecting_system(grid, marks, cfg.level);
  auto basis = make_basis(cfg, ens);
  auto target = make_target(cfg, ens);
  EstimateOptions opts;
  auto field = estimate_derivative(ens, target, sys, cfg.level, basis, nullptr, opts);

  auto oracle = [&](int p, int anchor) -> double {
    if (cfg.target == "terminal_noise") return 1.0;
    if (cfg.target == "terminal_noise_sq") return 2.0 * ens.running_increment(p, anchor, 0);
    if (cfg.target == "counts_sq") {
      const double lambda = cfg.intensities.at(0);
      return 2.0 * (ens.running_count(p, anchor, 0) +
                    lambda * (grid.horizon - grid.t(anchor))) +
             1.0;
    }
    throw ConfigError("derivative-oracle: no closed form for target '" + cfg.target + "'");
  };
  if (cfg.target == "counts_sq" && cfg.noise_kind != "compensated_poisson")
    throw ConfigError("derivative-oracle: counts_sq needs a constant-intensity model");

  double err = 0.0, norm = 0.0;
  for (std::size_t c = 0; c < field.cells.size(); ++c) {
    const int anchor = field.cells[c].cell.step_lo;
    for (int p = 0; p < ens.n_paths; ++p) {
      const double truth = oracle(p, anchor);
      const double e = field.value(p, static_cast<int>(c)) - truth;
      err += e * e;
      norm += truth * truth;
    }
  }
  if (cfg.target == "terminal_noise") {
    const double rmse = std::sqrt(err / (field.cells.size() * ens.n_paths));
    rep.checks.push_back(within("field_rmse", rmse, 0.0, 0.05));
  } else {
    const double rel = std::sqrt(err / std::max(norm, 1e-300));
    rep.checks.push_back(within("field_relative_l2", rel, 0.0, 0.10));
  }

  const auto dir = artifacts_dir(cfg);
  const auto path = dir + "/field.csv";
  write_field_csv(field, grid, marks, path);
  rep.artifacts.emplace_back("field", path);
}

void run_duality(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto marks = make_marks(cfg);
  auto eval_ens = sample_ensemble(make_noise_model(cfg), grid, marks, cfg.paths, cfg.seed);
  auto fit_ens = cfg.two_ensemble
                     ? sample_ensemble(make_noise_model(cfg), grid, marks, cfg.paths,
                                       cfg.seed ^ 0x9E3779B97F4A7C15ULL)
                     : eval_ens;
  auto sys = build_dissecting_system(grid, marks, cfg.level);
  auto basis = make_basis(cfg, eval_ens);
  auto field = estimate_derivative(fit_ens, make_target(cfg, fit_ens), sys, cfg.level, basis);
  auto rec = duality_gap(eval_ens, make_target(cfg, eval_ens), make_integrand(cfg, grid), field);

  rep.checks.push_back(
      within("duality_gap", rec.gap, 0.0, 4.0 * rec.combined_se(), rec.combined_se()));
  if (cfg.target == "counts" && cfg.noise_kind == "compensated_poisson" &&
      cfg.integrand == "one") {
    const double expected = cfg.intensities.at(0) * grid.horizon;  // Var H_T
    rep.checks.push_back(within("duality_lhs", rec.lhs, expected, 4.0 * rec.se_lhs, rec.se_lhs));
  }
  if (cfg.target == "terminal_noise" && cfg.noise_kind == "brownian" && cfg.integrand == "one")
    rep.checks.push_back(
        within("duality_lhs", rec.lhs, grid.horizon, 4.0 * rec.se_lhs, rec.se_lhs));

  const auto dir = artifacts_dir(cfg);
  const auto path = dir + "/duality.csv";
  std::ofstream os(path);
  os.precision(17);
  os << "lhs,se_lhs,rhs,se_rhs,gap,se_gap\n"
     << rec.lhs << ',' << rec.se_lhs << ',' << rec.rhs << ',' << rec.se_rhs << ',' << rec.gap
     << ',' << rec.se_gap << '\n';
  rep.artifacts.emplace_back("duality", path);
}

void run_representation(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto marks = make_marks(cfg);
  auto ens = sample_ensemble(make_noise_model(cfg), grid, marks, cfg.paths, cfg.seed);
  int max_level = *std::max_element(cfg.levels.begin(), cfg.levels.end());
  auto sys = build_dissecting_system(grid, marks, max_level);
  auto basis = make_basis(cfg, ens);
  auto target = make_target(cfg, ens);

  const auto dir = artifacts_dir(cfg);
  const auto path = dir + "/representation.csv";
  std::ofstream os(path);
  os.precision(17);
  os << "level,residual_variance,target_variance,max_abs_orthogonality_z\n";

  double prev = std::numeric_limits<double>::infinity();
  bool decreasing = true;
  double max_z = 0.0;
  for (int level : cfg.levels) {
    auto field = estimate_derivative(ens, target, sys, level, basis);
    auto rec = representation_residual(ens, target, field);
    os << level << ',' << rec.residual_variance << ',' << rec.target_variance << ','
       << rec.max_abs_z << '\n';
    if (rec.residual_variance >= prev) decreasing = false;
    prev = rec.residual_variance;
    max_z = std::max(max_z, rec.max_abs_z);
  }
  rep.checks.push_back(exact("residual_variance_decreasing", decreasing ? 1.0 : 0.0, 1.0));
  rep.checks.push_back(within("orthogonality_max_abs_z", max_z, 0.0, 4.0));
  rep.artifacts.emplace_back("representation", path);
}

void run_adjoint_check(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto pr = make_problem(cfg, grid);
  auto eval_ens = pr.factory(cfg.seed, cfg.paths);
  auto eval_states = simulate_state(eval_ens, pr.sde, pr.policy);
  PathEnsemble fit_ens;
  StatePaths fit_states;
  AdjointInputs in;
  in.eval_ens = &eval_ens;
  in.eval_states = &eval_states;
  if (cfg.two_ensemble) {
    fit_ens = pr.factory(cfg.seed ^ 0x9E3779B97F4A7C15ULL, cfg.paths);
    fit_states = simulate_state(fit_ens, pr.sde, pr.policy);
    in.fit_ens = &fit_ens;
    in.fit_states = &fit_states;
  }
  auto sys = build_dissecting_system(grid, eval_ens.marks, cfg.level);
  AdjointOptions opts;
  opts.level = cfg.level;
  opts.basis = problem_basis(cfg, pr);
  auto bundle = build_adjoints(in, pr.sde, pr.cost, sys, opts);

  double terminal_gap = 0.0, p_gap = 0.0;
  for (int p = 0; p < eval_ens.n_paths; ++p) {
    terminal_gap = std::max(terminal_gap,
                            std::abs(bundle.K_at(p, bundle.n_steps) -
                                     pr.cost.terminal_dx(eval_states.state(p, bundle.n_steps))));
    for (std::size_t a = 0; a < bundle.anchors.size(); ++a)
      p_gap = std::max(p_gap, std::abs(bundle.p_at_anchor(p, static_cast<int>(a)) -
                                       bundle.K_at(p, bundle.anchors[a])));
  }
  rep.checks.push_back(exact("terminal_condition_gap", terminal_gap, 0.0));
  // All shipped problems have db/dx = dphi/dx = 0, so F = 0 and p = K.
  rep.checks.push_back(exact("p_equals_K_when_F_vanishes", p_gap, 0.0));

  // Duality sanity at a few anchors.
  double max_duality_z = 0.0;
  for (std::size_t a : {std::size_t{0}, bundle.anchors.size() / 2}) {
    TargetVariable t;
    t.values.resize(eval_ens.n_paths);
    for (int p = 0; p < eval_ens.n_paths; ++p)
      t.values[p] = bundle.K_at(p, bundle.anchors[a]);
    const int lo = bundle.anchors[a], hi = bundle.anchors[a] + bundle.anchor_width;
    auto kappa = [lo, hi](int, int k, int) { return (k >= lo && k < hi) ? 1.0 : 0.0; };
    auto rec = duality_gap(eval_ens, t, kappa, bundle.dK_fields[a], &eval_states);
    if (rec.combined_se() > 0.0)
      max_duality_z = std::max(max_duality_z, std::abs(rec.gap / rec.combined_se()));
  }
  rep.checks.push_back(within("anchor_duality_max_abs_z", max_duality_z, 0.0, 4.0));

  if (pr.kappa_oracle) {
    const double expected = pr.kappa_oracle(cfg.theta0);
    double acc = 0.0;
    std::size_t cnt = 0;
    for (const auto& vals : bundle.kappa_values)
      for (double v : vals) {
        acc += v;
        ++cnt;
      }
    rep.checks.push_back(within("kappa_mean", acc / cnt, expected, 0.1));
  }

  const auto dir = artifacts_dir(cfg);
  write_adjoint_csv(bundle, grid, dir + "/adjoint_paths.csv", dir + "/adjoint_anchors.csv");
  rep.artifacts.emplace_back("adjoint_paths", dir + "/adjoint_paths.csv");
  rep.artifacts.emplace_back("adjoint_anchors", dir + "/adjoint_anchors.csv");
}

void run_criticality(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto pr = make_problem(cfg, grid);
  auto eval_ens = pr.factory(cfg.seed, cfg.paths);
  auto eval_states = simulate_state(eval_ens, pr.sde, pr.policy);
  PathEnsemble fit_ens;
  StatePaths fit_states;
  AdjointInputs in;
  in.eval_ens = &eval_ens;
  in.eval_states = &eval_states;
  if (cfg.two_ensemble) {
    fit_ens = pr.factory(cfg.seed ^ 0x9E3779B97F4A7C15ULL, cfg.paths);
    fit_states = simulate_state(fit_ens, pr.sde, pr.policy);
    in.fit_ens = &fit_ens;
    in.fit_states = &fit_states;
  }
  auto sys = build_dissecting_system(grid, eval_ens.marks, cfg.level);
  AdjointOptions opts;
  opts.level = cfg.level;
  opts.basis = problem_basis(cfg, pr);
  auto bundle = build_adjoints(in, pr.sde, pr.cost, sys, opts);
  auto gradient = hamiltonian_gradient(eval_ens, eval_states, pr.sde, pr.cost, bundle);
  project_gradient(gradient, opts.basis, {&eval_ens, &eval_states});
  auto crit = criticality_score(gradient, grid);

  rep.checks.push_back(within("criticality_score", crit.score, 0.0, cfg.opt_tolerance,
                              crit.score_se));

  const auto dir = artifacts_dir(cfg);
  const auto path = dir + "/criticality_profile.csv";
  std::ofstream os(path);
  os.precision(17);
  os << "step,t,mean_sq_projected_gradient\n";
  for (int k = 0; k < static_cast<int>(crit.profile.size()); ++k)
    os << k << ',' << grid.t(k) << ',' << crit.profile[k] << '\n';
  rep.artifacts.emplace_back("criticality_profile", path);
}

void run_optimize(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  auto pr = make_problem(cfg, grid);
  auto oc = make_opt_config(cfg, problem_basis(cfg, pr));
  auto result = optimize_policy(pr.factory, grid, pr.sde, pr.cost, pr.policy, oc);

  rep.checks.push_back(within("optimizer_gap", result.policy.theta[0], pr.expected_optimum,
                              pr.optimum_tolerance));
  rep.checks.push_back(
      exact("trace_length_positive", result.trace.empty() ? 0.0 : 1.0, 1.0));

  const auto dir = artifacts_dir(cfg);
  const auto path = dir + "/trace.csv";
  write_trace_csv(result.trace, path);
  rep.artifacts.emplace_back("trace", path);
}

void run_credit_benchmark(const ExperimentConfig& cfg, RunReport& rep) {
  const TimeGrid grid(cfg.horizon, cfg.steps);
  CreditMarketSpec spec;
  spec.rho = {cfg.credit_rho};
  spec.intensity_model = NoiseModel::compensated_poisson({cfg.credit_intensity});
  spec.x0 = cfg.credit_x0;
  spec.utility = cfg.credit_utility == "power"
                     ? UtilitySpec::power_utility(cfg.credit_power_gamma)
                     : UtilitySpec::log_utility();
  auto market = build_credit_market(spec);
  const double pi_star = analytic_log_optimum(cfg.credit_rho, cfg.credit_intensity);

  AdjointOptions aopts;
  aopts.level = cfg.level;
  {
    std::vector<FeatureSpec> vars{{FeatureKind::Alive, -1}, {FeatureKind::InverseState, -1}};
    aopts.basis = BasisSpec::polynomial(std::move(vars), 1);
    aopts.basis.ridge_rel = cfg.ridge;
  }

  // Optimizer from several starts.
  std::vector<double> finals;
  const auto dir = artifacts_dir(cfg);
  for (double start : {0.1, 0.5, 0.9}) {
    ExperimentConfig sub = cfg;
    sub.theta0 = start;
    auto oc = make_opt_config(cfg, aopts.basis);
    auto result = optimize_policy(market.factory(grid), grid, market.sde, market.cost,
                                  proportion_policy({start}, cfg.margin), oc);
    finals.push_back(result.policy.theta[0]);
    const auto path = dir + "/trace_start_" + std::to_string(start).substr(0, 3) + ".csv";
    write_trace_csv(result.trace, path);
    rep.artifacts.emplace_back("trace_start_" + std::to_string(start).substr(0, 3), path);
  }
  for (std::size_t i = 0; i < finals.size(); ++i)
    rep.checks.push_back(within("optimizer_gap_start_" + std::to_string(i), finals[i], pi_star,
                                0.02));
  const double spread = *std::max_element(finals.begin(), finals.end()) -
                        *std::min_element(finals.begin(), finals.end());
  rep.checks.push_back(within("multistart_spread", spread, 0.0, 0.02));

  // Proportion grid on common random numbers.
  std::vector<double> pis;
  for (double pi = cfg.pi_grid_step; pi < 1.0 - cfg.margin; pi += cfg.pi_grid_step)
    pis.push_back(pi);
  auto points = scan_proportions(market, grid, cfg.paths, cfg.seed, pis, aopts,
                                 cfg.two_ensemble);
  {
    const auto path = dir + "/pi_grid.csv";
    std::ofstream os(path);
    os.precision(17);
    os << "pi,j,j_se,residual,residual_se\n";
    for (const auto& pt : points)
      os << pt.pi << ',' << pt.j << ',' << pt.j_se << ',' << pt.residual << ','
         << pt.residual_se << '\n';
    rep.artifacts.emplace_back("pi_grid", path);
  }

  std::size_t argmax = 0, argmin_res = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].j > points[argmax].j) argmax = i;
    if (std::abs(points[i].residual) < std::abs(points[argmin_res].residual)) argmin_res = i;
  }
  rep.checks.push_back(within("grid_argmax_gap", points[argmax].pi, pi_star,
                              cfg.pi_grid_step + 1e-9));
  rep.checks.push_back(within("grid_residual_argmin_vs_argmax",
                              points[argmin_res].pi, points[argmax].pi,
                              cfg.pi_grid_step + 1e-9));

  // Concavity: midpoint above chord at 4-SE resolution on the J grid.
  int violations = 0;
  for (std::size_t i = 1; i + 1 < points.size(); ++i) {
    const double mid = points[i].j;
    const double chord = 0.5 * (points[i - 1].j + points[i + 1].j);
    const double se = points[i].j_se + 0.5 * (points[i - 1].j_se + points[i + 1].j_se);
    if (mid < chord - 4.0 * se) ++violations;
  }
  rep.checks.push_back(exact("concavity_midpoint_violations", violations, 0.0));

  // Residual at the analytic optimum and far from it.
  {
    auto near = scan_proportions(market, grid, cfg.paths, cfg.seed, {pi_star, 0.2}, aopts,
                                 cfg.two_ensemble);
    const auto& at_opt = near[0];
    const auto& far = near[1];
    rep.checks.push_back(within("residual_at_optimum", at_opt.residual, 0.0,
                                4.0 * at_opt.residual_se, at_opt.residual_se));
    rep.checks.push_back(above("residual_far_z", std::abs(far.residual) / far.residual_se,
                               10.0));
  }

  rep.checks.push_back(within("analytic_optimum", pi_star,
                              cfg.credit_rho / (cfg.credit_rho + cfg.credit_intensity), 0.0));
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  fs::create_directories(cfg.out_dir);

  RunReport rep;
  rep.config = cfg;
  if (cfg.kind == "validate-noise")
    run_validate_noise(cfg, rep);
  else if (cfg.kind == "dissect-check")
    run_dissect_check(cfg, rep);
  else if (cfg.kind == "derivative-oracle")
    run_derivative_oracle(cfg, rep);
  else if (cfg.kind == "duality")
    run_duality(cfg, rep);
  else if (cfg.kind == "representation")
    run_representation(cfg, rep);
  else if (cfg.kind == "adjoint-check")
    run_adjoint_check(cfg, rep);
  else if (cfg.kind == "criticality")
    run_criticality(cfg, rep);
  else if (cfg.kind == "optimize")
    run_optimize(cfg, rep);
  else if (cfg.kind == "credit-benchmark")
    run_credit_benchmark(cfg, rep);
  else
    throw ConfigError("unknown experiment kind: " + cfg.kind);

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

void write_report(const RunReport& report, const std::string& dir) {
  fs::create_directories(dir);
  {
    nlohmann::ordered_json j;
    j["kind"] = report.config.kind;
    j["pass"] = report.all_pass();
    j["config"] = serialize_config(report.config);
    auto checks = nlohmann::ordered_json::array();
    for (const auto& c : report.checks) {
      nlohmann::ordered_json jc;
      jc["name"] = c.name;
      jc["value"] = c.value;
      jc["expected"] = c.expected;
      jc["tolerance"] = c.tolerance;
      jc["se"] = c.se;
      jc["exact"] = c.exact;
      jc["pass"] = c.pass;
      checks.push_back(jc);
    }
    j["checks"] = checks;
    auto arts = nlohmann::ordered_json::array();
    for (const auto& [label, path] : report.artifacts) {
      nlohmann::ordered_json ja;
      ja["label"] = label;
      ja["path"] = path;
      arts.push_back(ja);
    }
    j["artifacts"] = arts;
    std::ofstream os(fs::path(dir) / "summary.json");
    if (!os) throw std::runtime_error("cannot write summary.json under " + dir);
    os << j.dump(2) << '\n';
  }
  {
    std::ofstream os(fs::path(dir) / "report.txt");
    if (!os) throw std::runtime_error("cannot write report.txt under " + dir);
    os << "experiment: " << report.config.kind << "\n";
    os << "wall_seconds: " << report.wall_seconds << "\n\n";
    os.precision(10);
    os << "check                                      value        expected     tolerance    "
          "pass\n";
    for (const auto& c : report.checks) {
      os.width(40);
      os << std::left << c.name << "  ";
      os.width(12);
      os << c.value << " ";
      os.width(12);
      os << c.expected << " ";
      os.width(12);
      os << (c.exact ? 0.0 : c.tolerance) << " ";
      os << (c.pass ? "PASS" : "FAIL") << "\n";
    }
    os << "\nresult: " << (report.all_pass() ? "PASS" : "FAIL") << "\n";
  }
}

int report_exit_code(const RunReport& report) { return report.all_pass() ? 0 : 1; }

}  // namespace stomax
