#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "stomax/adjoint.hpp"
#include "support/toys.hpp"

using namespace stomax;

namespace {

struct Fixture {
  PathEnsemble eval_ens, fit_ens;
  StatePaths eval_states, fit_states;
  DissectingSystem system;
  AdjointInputs inputs;
};

Fixture make_fixture(const NoiseModel& model, const MarkSpace& marks, const TimeGrid& grid,
                     const ControlledSDESpec& sde, const ControlPolicy& policy, int n_paths,
                     unsigned seed, int max_level) {
  Fixture f;
  f.eval_ens = sample_ensemble(model, grid, marks, n_paths, seed);
  f.fit_ens = sample_ensemble(model, grid, marks, n_paths, seed + 1000);
  f.eval_states = simulate_state(f.eval_ens, sde, policy);
  f.fit_states = simulate_state(f.fit_ens, sde, policy);
  f.system = build_dissecting_system(grid, marks, max_level);
  f.inputs = {&f.eval_ens, &f.eval_states, &f.fit_ens, &f.fit_states};
  return f;
}

BasisSpec noise_state_basis() {
  return BasisSpec::polynomial({{FeatureKind::RunningNoise, 0}, {FeatureKind::State, 0}}, 2);
}

}  // namespace

TEST_CASE("K equals the terminal gradient when f = 0", "[adjoint]") {
  const TimeGrid grid(1.0, 32);
  auto sde = toys::lq_drift_sde(0.0, 1.0);
  auto policy = toys::constant_policy({0.5}, toys::sym_box(4.0));
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 400, 51);
  auto states = simulate_state(ens, sde, policy);
  auto cost = toys::quadratic_terminal_cost();
  auto K = compute_K_values(ens, states, cost);
  for (int p = 0; p < ens.n_paths; ++p) {
    const double gprime = -2.0 * states.state(p, 32);
    for (int k = 0; k <= 32; ++k)
      REQUIRE(K[static_cast<std::size_t>(p) * 33 + k] == gprime);
  }
}

TEST_CASE("K difference equals the running-cost integral", "[adjoint]") {
  const TimeGrid grid(1.0, 32);
  auto sde = toys::lq_drift_sde(0.3, 1.0);
  auto policy = toys::constant_policy({0.5}, toys::sym_box(4.0));
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 200, 52);
  auto states = simulate_state(ens, sde, policy);
  auto cost = toys::quadratic_running_cost();
  auto K = compute_K_values(ens, states, cost);
  const double dt = grid.dt();
  for (int p = 0; p < 50; ++p) {
    for (int t : {0, 7, 20}) {
      double forward = 0.0;
      for (int k = t; k < 32; ++k) {
        CoeffArgs args{grid.t(k), dt, p, k, states.state(p, k), states.control(p, k), &ens};
        forward += cost.running_dx(args) * dt;
      }
      const double diff =
          K[static_cast<std::size_t>(p) * 33 + t] - K[static_cast<std::size_t>(p) * 33 + 32];
      REQUIRE(diff == Catch::Approx(forward).margin(1e-12));
    }
  }
}

TEST_CASE("linear terminal cost: K = 1, dK is a zero field", "[adjoint]") {
  const TimeGrid grid(1.0, 32);
  auto sde = toys::lq_drift_sde(0.0, 1.0);
  auto policy = toys::constant_policy({0.2}, toys::sym_box(4.0));
  auto f = make_fixture(NoiseModel::brownian(), MarkSpace{}, grid, sde, policy, 8000, 53, 3);
  AdjointOptions opts;
  opts.level = 3;
  opts.basis = noise_state_basis();
  auto cost = toys::linear_terminal_cost();
  auto bundle = build_adjoints(f.inputs, sde, cost, f.system, opts);

  for (int p = 0; p < 100; ++p)
    for (int k = 0; k < 32; ++k) REQUIRE(bundle.K_at(p, k) == 1.0);
  auto rms = [](const std::vector<std::vector<double>>& fields) {
    double sq = 0.0;
    std::size_t cnt = 0;
    for (const auto& vals : fields)
      for (double v : vals) {
        sq += v * v;
        ++cnt;
      }
    return std::sqrt(sq / cnt);
  };
  REQUIRE(rms(bundle.dK_values) < 0.03);
  for (int p = 0; p < 100; ++p) REQUIRE(bundle.p_at(p, 10) == 1.0);
  REQUIRE(rms(bundle.kappa_values) < 0.03);
}

TEST_CASE("uncontrolled brownian with quadratic g: K = 2W_T and dK = 2", "[adjoint]") {
  const TimeGrid grid(1.0, 32);
  ControlledSDESpec sde;
  sde.x0 = 0.0;
  sde.n_ctrl = 1;
  sde.drift = [](const CoeffArgs&) { return 0.0; };
  sde.drift_dx = [](const CoeffArgs&) { return 0.0; };
  sde.drift_du = [](const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
  sde.jump = [](int, const CoeffArgs&) { return 1.0; };
  sde.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
  sde.jump_du = [](int, const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
  CostSpec cost;
  cost.terminal = [](double x) { return x * x; };
  cost.terminal_dx = [](double x) { return 2.0 * x; };
  auto policy = toys::constant_policy({0.0}, toys::sym_box(4.0));

  auto f = make_fixture(NoiseModel::brownian(), MarkSpace{}, grid, sde, policy, 20000, 54, 3);
  AdjointOptions opts;
  opts.level = 3;
  opts.basis = noise_state_basis();
  auto bundle = build_adjoints(f.inputs, sde, cost, f.system, opts);

  for (int p = 0; p < 100; ++p)
    REQUIRE(bundle.K_at(p, 5) == 2.0 * f.eval_states.state(p, 32));
  double acc = 0.0;
  std::size_t cnt = 0;
  for (const auto& vals : bundle.dK_values)
    for (double v : vals) {
      acc += v;
      ++cnt;
    }
  REQUIRE(acc / cnt == Catch::Approx(2.0).margin(0.05));

  TargetVariable t;
  t.values.resize(f.eval_ens.n_paths);
  for (int p = 0; p < f.eval_ens.n_paths; ++p) t.values[p] = bundle.K_at(p, 8);
  auto kappa = [](int, int k, int) { return (k >= 8 && k < 12) ? 1.0 : 0.0; };
  auto rec = duality_gap(f.eval_ens, t, kappa, bundle.dK_fields[2], &f.eval_states);
  REQUIRE(std::abs(rec.gap) <= 4.0 * rec.combined_se());
}

TEST_CASE("F closed forms", "[adjoint]") {
  const TimeGrid grid(1.0, 16);

  SECTION("db/dx = dphi/dx = 0 gives F = 0 and p = K exactly") {
    auto sde = toys::lq_drift_sde(0.0, 1.0);
    auto policy = toys::constant_policy({0.7}, toys::sym_box(4.0));
    auto f = make_fixture(NoiseModel::brownian(), MarkSpace{}, grid, sde, policy, 2000, 55, 2);
    AdjointOptions opts;
    opts.level = 2;
    opts.basis = noise_state_basis();
    auto bundle = build_adjoints(f.inputs, sde, toys::quadratic_terminal_cost(), f.system, opts);
    for (double v : bundle.F) REQUIRE(v == 0.0);
    for (int p = 0; p < f.eval_ens.n_paths; ++p)
      for (std::size_t a = 0; a < bundle.anchors.size(); ++a)
        REQUIRE(bundle.p_at_anchor(p, static_cast<int>(a)) ==
                bundle.K_at(p, bundle.anchors[a]));
  }

  SECTION("db/dx = c, linear g: F = c exactly") {
    const double c = 0.8;
    auto sde = toys::exp_growth_sde(1.0, c);
    auto policy = toys::constant_policy({0.0}, toys::sym_box(4.0));
    auto f = make_fixture(NoiseModel::brownian(), MarkSpace{}, grid, sde, policy, 500, 56, 2);
    AdjointOptions opts;
    opts.level = 2;
    opts.basis = noise_state_basis();
    auto bundle = build_adjoints(f.inputs, sde, toys::linear_terminal_cost(), f.system, opts);
    for (double v : bundle.F) REQUIRE(v == c);  // K = 1, jump_dx = 0
  }

  SECTION("two-step grid: F and p match the hand expansion") {
    const TimeGrid g2(1.0, 2);
    const double c = 0.5;
    auto sde = toys::exp_growth_sde(1.0, c);
    auto policy = toys::constant_policy({0.0}, toys::sym_box(4.0));
    auto ens = sample_ensemble(NoiseModel::brownian(), g2, MarkSpace{}, 64, 57);
    auto states = simulate_state(ens, sde, policy);
    CostSpec cost;
    cost.terminal = [](double x) { return x * x; };
    cost.terminal_dx = [](double x) { return 2.0 * x; };
    auto K = compute_K_values(ens, states, cost);
    std::vector<std::vector<double>> no_dk;
    no_dk.push_back(std::vector<double>(ens.n_paths, 0.0));
    no_dk.push_back(std::vector<double>(ens.n_paths, 0.0));
    auto F = compute_F_values(ens, states, sde, K, no_dk, 1);
    auto p = compute_p_values(ens, states, sde, K, F, {0, 1});
    const double dt = g2.dt();
    for (int i = 0; i < ens.n_paths; ++i) {
      const double x2 = states.state(i, 2);
      REQUIRE(F[static_cast<std::size_t>(i) * 2 + 0] ==
              Catch::Approx(2.0 * x2 * c).margin(1e-12));
      // p_0 = K_0 + dt (F_0 G_0(0) + F_1 G_1(0)), G_0(0) = 1, G_1(0) = 1 + c dt.
      const double expected_p0 =
          2.0 * x2 + dt * (2.0 * x2 * c + 2.0 * x2 * c * (1.0 + c * dt));
      REQUIRE(p[static_cast<std::size_t>(i) * 2 + 0] ==
              Catch::Approx(expected_p0).margin(1e-12));
    }
  }
}

TEST_CASE("LQ toy adjoints: p = -2 X_T, kappa near -2", "[adjoint]") {
  const TimeGrid grid(1.0, 32);
  auto sde = toys::lq_drift_sde(0.0, 1.0);  // b = u, phi = 1
  auto policy = toys::constant_policy({1.0}, toys::sym_box(4.0));
  auto f = make_fixture(NoiseModel::brownian(), MarkSpace{}, grid, sde, policy, 20000, 58, 3);
  AdjointOptions opts;
  opts.level = 3;
  opts.basis = noise_state_basis();
  auto bundle = build_adjoints(f.inputs, sde, toys::quadratic_terminal_cost(), f.system, opts);

  for (int p = 0; p < 100; ++p)
    REQUIRE(bundle.p_at(p, 4) == -2.0 * f.eval_states.state(p, 32));
  double acc = 0.0;
  std::size_t cnt = 0;
  for (const auto& vals : bundle.kappa_values)
    for (double v : vals) {
      acc += v;
      ++cnt;
    }
  REQUIRE(acc / cnt == Catch::Approx(-2.0).margin(0.05));
}

TEST_CASE("non-finite proxies raise an admissibility error", "[adjoint]") {
  const TimeGrid grid(1.0, 8);
  auto sde = toys::lq_drift_sde(0.0, 1.0);
  auto policy = toys::constant_policy({0.0}, toys::sym_box(4.0));
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 100, 59);
  auto states = simulate_state(ens, sde, policy);
  auto system = build_dissecting_system(grid, ens.marks, 2);
  CostSpec cost;
  cost.terminal = [](double) { return 1.0; };
  cost.terminal_dx = [](double) { return std::numeric_limits<double>::infinity(); };
  AdjointOptions opts;
  opts.level = 2;
  opts.basis = noise_state_basis();
  AdjointInputs in{&ens, &states, nullptr, nullptr};
  REQUIRE_THROWS_AS(build_adjoints(in, sde, cost, system, opts), AdmissibilityError);
}

TEST_CASE("kappa estimates tighten like 1/sqrt(n)", "[adjoint]") {
  const TimeGrid grid(1.0, 16);
  auto sde = toys::lq_drift_sde(0.0, 1.0);
  auto policy = toys::constant_policy({0.5}, toys::sym_box(4.0));
  auto cost = toys::quadratic_terminal_cost();
  auto system = build_dissecting_system(grid, MarkSpace{}, 2);

  auto kappa_mean = [&](int n_paths, unsigned seed) {
    auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n_paths, seed);
    auto states = simulate_state(ens, sde, policy);
    AdjointOptions opts;
    opts.level = 2;
    opts.basis = noise_state_basis();
    AdjointInputs in{&ens, &states, nullptr, nullptr};
    auto bundle = build_adjoints(in, sde, cost, system, opts);
    double acc = 0.0;
    std::size_t cnt = 0;
    for (const auto& vals : bundle.kappa_values)
      for (double v : vals) {
        acc += v;
        ++cnt;
      }
    return acc / cnt;
  };

  auto spread = [&](int n_paths, unsigned base) {
    double s = 0.0, s2 = 0.0;
    const int reps = 12;
    for (int r = 0; r < reps; ++r) {
      const double m = kappa_mean(n_paths, base + r);
      s += m;
      s2 += m * m;
    }
    return std::sqrt(s2 / reps - (s / reps) * (s / reps));
  };
  const double coarse = spread(2000, 100);
  const double fine = spread(8000, 200);
  REQUIRE(fine < 0.8 * coarse);  // expect about 0.5
}
