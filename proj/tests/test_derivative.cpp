#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "stomax/derivative.hpp"
#include "support/oracles.hpp"

using namespace stomax;

namespace {

TargetVariable terminal_noise(const PathEnsemble& ens, int power) {
  TargetVariable t;
  t.values.resize(ens.n_paths);
  const Cell full(0, ens.grid.n_steps, 0);
  for (int p = 0; p < ens.n_paths; ++p) {
    const double w = ens.cell_increment(p, full);
    t.values[p] = power == 2 ? w * w : w;
  }
  t.label = power == 2 ? "w_T^2" : "w_T";
  return t;
}

BasisSpec noise_basis() { return BasisSpec::polynomial({{FeatureKind::RunningNoise, 0}}, 2); }
BasisSpec count_basis() { return BasisSpec::polynomial({{FeatureKind::RunningCount, 0}}, 2); }

}  // namespace

TEST_CASE("brownian xi = W_T: the field is 1 everywhere", "[derivative]") {
  const TimeGrid grid(1.0, 64);
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 20000, 101);
  auto sys = build_dissecting_system(grid, ens.marks, 3);
  auto field = estimate_derivative(ens, terminal_noise(ens, 1), sys, 3, noise_basis());

  double sq = 0.0;
  std::size_t cnt = 0;
  for (std::size_t c = 0; c < field.cells.size(); ++c)
    for (int p = 0; p < ens.n_paths; ++p) {
      const double e = field.value(p, static_cast<int>(c)) - 1.0;
      sq += e * e;
      ++cnt;
    }
  REQUIRE(std::sqrt(sq / cnt) < 0.08);
}

TEST_CASE("brownian xi = W_T^2: the field is 2 W_t", "[derivative]") {
  const TimeGrid grid(1.0, 64);
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 30000, 102);
  auto sys = build_dissecting_system(grid, ens.marks, 3);
  auto field = estimate_derivative(ens, terminal_noise(ens, 2), sys, 3, noise_basis());

  double err = 0.0, norm = 0.0;
  for (std::size_t c = 0; c < field.cells.size(); ++c) {
    const int anchor = field.cells[c].cell.step_lo;
    for (int p = 0; p < ens.n_paths; ++p) {
      const double truth = 2.0 * ens.running_increment(p, anchor, 0);
      const double e = field.value(p, static_cast<int>(c)) - truth;
      err += e * e;
      norm += truth * truth;
    }
  }
  REQUIRE(std::sqrt(err / norm) < 0.15);
}

TEST_CASE("poisson xi = H_T^2: the field is 2(H_t + lambda(T-t)) + 1", "[derivative]") {
  const TimeGrid grid(1.0, 64);
  const double lambda = 2.0;
  auto ens = sample_ensemble(NoiseModel::compensated_poisson({lambda}), grid, MarkSpace::range(1),
                             30000, 103);
  TargetVariable target;
  target.values.resize(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p) {
    const double h = ens.running_count(p, grid.n_steps, 0);
    target.values[p] = h * h;
  }
  auto sys = build_dissecting_system(grid, ens.marks, 3);
  auto field = estimate_derivative(ens, target, sys, 3, count_basis());

  double err = 0.0, norm = 0.0;
  for (std::size_t c = 0; c < field.cells.size(); ++c) {
    const int anchor = field.cells[c].cell.step_lo;
    const double t = grid.t(anchor);
    for (int p = 0; p < ens.n_paths; ++p) {
      const double h = ens.running_count(p, anchor, 0);
      const double truth = 2.0 * (h + lambda * (1.0 - t)) + 1.0;
      const double e = field.value(p, static_cast<int>(c)) - truth;
      err += e * e;
      norm += truth * truth;
    }
  }
  REQUIRE(std::sqrt(err / norm) < 0.10);
}

TEST_CASE("enumerated binomial tree: estimator reproduces 2 W_t exactly", "[derivative][oracle]") {
  // 2^10 equally weighted sign paths make the regression an exact projection;
  // the conditional mean is in the basis span, so fitted = 2 W_t up to ridge.
  const int K = 10;
  auto ens = oracles::binomial_ensemble(K, 1.0, std::sqrt(0.1));
  auto sys = build_dissecting_system(ens.grid, ens.marks, 1);
  auto field = estimate_derivative(ens, terminal_noise(ens, 2), sys, 1, noise_basis());

  for (std::size_t c = 0; c < field.cells.size(); ++c) {
    const int anchor = field.cells[c].cell.step_lo;
    for (int p = 0; p < ens.n_paths; ++p) {
      const double truth = 2.0 * ens.running_increment(p, anchor, 0);
      REQUIRE(field.value(p, static_cast<int>(c)) ==
              Catch::Approx(truth).margin(1e-6 + 1e-6 * std::abs(truth)));
    }
  }
}

TEST_CASE("poisson conditional moment enumeration matches the closed form", "[derivative][oracle]") {
  const double lambda = 2.0, T = 1.0;
  for (double t : {0.0, 0.25, 0.5}) {
    const double cell_width = 0.25;
    const double m_cell = lambda * cell_width;
    const double m_rest = lambda * (T - t - cell_width);
    for (double h : {0.0, 1.0, 2.0, 5.0}) {
      const double enumerated = oracles::poisson_sq_conditional_moment(h, m_cell, m_rest);
      const double formula = 2.0 * (h + lambda * (T - t)) + 1.0;
      REQUIRE(enumerated == Catch::Approx(formula).epsilon(1e-10));
    }
  }
}

TEST_CASE("duality gap on the three oracle cases", "[derivative]") {
  const TimeGrid grid(1.0, 64);
  const int n = 30000;
  auto one = [](int, int, int) { return 1.0; };

  SECTION("poisson, xi = H_T: both sides near Var H_T = 2") {
    auto fit_ens = sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid,
                                   MarkSpace::range(1), n, 201);
    auto eval_ens = sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid,
                                    MarkSpace::range(1), n, 202);
    auto count_target = [&](const PathEnsemble& e) {
      TargetVariable t;
      t.values.resize(e.n_paths);
      for (int p = 0; p < e.n_paths; ++p) t.values[p] = e.running_count(p, grid.n_steps, 0);
      return t;
    };
    auto sys = build_dissecting_system(grid, fit_ens.marks, 3);
    auto field = estimate_derivative(fit_ens, count_target(fit_ens), sys, 3, count_basis());
    auto rec = duality_gap(eval_ens, count_target(eval_ens), one, field);
    REQUIRE(std::abs(rec.gap) <= 4.0 * rec.combined_se());
    REQUIRE(rec.lhs == Catch::Approx(2.0).margin(4.0 * rec.se_lhs));
    // The rhs carries the fit-stage regression noise on top of its own SE.
    REQUIRE(rec.rhs == Catch::Approx(2.0).margin(4.0 * (rec.se_rhs + rec.se_fit)));
  }

  SECTION("brownian, xi = W_T: both sides near T = 1") {
    auto fit_ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n, 203);
    auto eval_ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n, 204);
    auto sys = build_dissecting_system(grid, fit_ens.marks, 3);
    auto field = estimate_derivative(fit_ens, terminal_noise(fit_ens, 1), sys, 3, noise_basis());
    auto rec = duality_gap(eval_ens, terminal_noise(eval_ens, 1), one, field);
    REQUIRE(std::abs(rec.gap) <= 4.0 * rec.combined_se());
    REQUIRE(rec.lhs == Catch::Approx(1.0).margin(4.0 * rec.se_lhs));
  }

  SECTION("constant xi: both sides vanish") {
    auto fit_ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n, 205);
    auto eval_ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n, 206);
    TargetVariable c;
    c.values.assign(n, 3.5);
    auto sys = build_dissecting_system(grid, fit_ens.marks, 3);
    auto field = estimate_derivative(fit_ens, c, sys, 3, noise_basis());
    auto rec = duality_gap(eval_ens, c, one, field);
    REQUIRE(std::abs(rec.lhs) <= 4.0 * rec.se_lhs);
    // The field of a constant is pure regression noise; the rhs is bounded
    // by the fit-stage noise the record estimates.
    REQUIRE(std::abs(rec.rhs) <= 4.0 * std::sqrt(rec.se_rhs * rec.se_rhs + rec.se_fit * rec.se_fit));
  }
}

TEST_CASE("representation residual", "[derivative]") {
  const TimeGrid grid(1.0, 64);

  SECTION("xi = mu(cell): residual collapses") {
    auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 20000, 301);
    const Cell cell(16, 32, 0);
    TargetVariable t;
    t.values.resize(ens.n_paths);
    for (int p = 0; p < ens.n_paths; ++p) t.values[p] = ens.cell_increment(p, cell);
    auto sys = build_dissecting_system(grid, ens.marks, 2);
    auto field = estimate_derivative(ens, t, sys, 2, noise_basis());
    auto rec = representation_residual(ens, t, field);
    REQUIRE(rec.residual_variance < 0.02 * rec.target_variance);
  }

  SECTION("xi = W_T^2: residual variance decreases across levels 2,3,4") {
    auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 30000, 302);
    auto sys = build_dissecting_system(grid, ens.marks, 4);
    auto t = terminal_noise(ens, 2);
    double prev = 1e300;
    for (int level : {2, 3, 4}) {
      auto field = estimate_derivative(ens, t, sys, level, noise_basis());
      auto rec = representation_residual(ens, t, field);
      REQUIRE(rec.residual_variance < prev);
      REQUIRE(rec.max_abs_z <= 5.0);  // 21 probes overall; allow the far tail
      prev = rec.residual_variance;
    }
  }

  SECTION("xi independent of the noise: field near zero, residual is xi - mean") {
    auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 20000, 303);
    TargetVariable t;
    t.values = external_gaussians(909, ens.n_paths);
    auto sys = build_dissecting_system(grid, ens.marks, 2);
    auto field = estimate_derivative(ens, t, sys, 2, noise_basis());
    auto rec = representation_residual(ens, t, field);
    REQUIRE(rec.residual_variance > 0.95 * rec.target_variance);
    REQUIRE(rec.max_abs_z <= 4.5);
    for (const auto& c : field.cells)
      REQUIRE(std::abs(c.coeffs[0]) < 0.2);
  }
}

TEST_CASE("estimator linearity is exact", "[derivative][exact]") {
  const TimeGrid grid(1.0, 64);  // lambda*dt = 2^-5, all increments dyadic
  auto ens = sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1),
                             1024, 401);
  auto sys = build_dissecting_system(grid, ens.marks, 3);

  TargetVariable xi1, xi2;
  xi1.values.resize(ens.n_paths);
  xi2.values.resize(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p) {
    const double h = ens.running_count(p, grid.n_steps, 0);
    xi1.values[p] = h;
    xi2.values[p] = h * h;
  }

  SECTION("scaling by powers of two is bit-exact with the full basis") {
    auto base = estimate_derivative(ens, xi1, sys, 3, count_basis());
    for (double a : {2.0, -1.0, 0.5}) {
      TargetVariable scaled;
      scaled.values.resize(ens.n_paths);
      for (int p = 0; p < ens.n_paths; ++p) scaled.values[p] = a * xi1.values[p];
      auto f = estimate_derivative(ens, scaled, sys, 3, count_basis());
      for (std::size_t c = 0; c < f.cells.size(); ++c)
        for (std::size_t j = 0; j < f.cells[c].coeffs.size(); ++j)
          REQUIRE(f.cells[c].coeffs[j] == a * base.cells[c].coeffs[j]);
    }
  }

  SECTION("additivity is bit-exact with dyadic responses and a 2^k design") {
    // Intercept-only basis, no ridge: every sum and the final division by
    // n = 2^10 are exact, so estimate(x1+x2) == estimate(x1) + estimate(x2)
    // holds bitwise.
    BasisSpec intercept;
    intercept.degree = 0;
    intercept.ridge_rel = 0.0;
    TargetVariable sum;
    sum.values.resize(ens.n_paths);
    for (int p = 0; p < ens.n_paths; ++p) sum.values[p] = xi1.values[p] + xi2.values[p];
    auto f1 = estimate_derivative(ens, xi1, sys, 3, intercept);
    auto f2 = estimate_derivative(ens, xi2, sys, 3, intercept);
    auto fs = estimate_derivative(ens, sum, sys, 3, intercept);
    for (std::size_t c = 0; c < fs.cells.size(); ++c)
      REQUIRE(fs.cells[c].coeffs[0] == f1.cells[c].coeffs[0] + f2.cells[c].coeffs[0]);
  }
}

TEST_CASE("fitted field is reproducible from coefficients alone", "[derivative][exact]") {
  const TimeGrid grid(1.0, 32);
  auto ens = sample_ensemble(NoiseModel::compensated_poisson({1.5}), grid, MarkSpace::range(1),
                             2000, 402);
  auto sys = build_dissecting_system(grid, ens.marks, 2);
  TargetVariable t;
  t.values.resize(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p) t.values[p] = ens.running_count(p, grid.n_steps, 0);
  auto field = estimate_derivative(ens, t, sys, 2, count_basis());
  auto again = field.evaluate({&ens, nullptr});
  REQUIRE(again == field.fitted);
}

TEST_CASE("integrand recovery: field of an integral reproduces the integrand", "[derivative]") {
  const TimeGrid grid(1.0, 64);
  auto sysgrid = MarkSpace::range(1);
  auto kappa = [&](int, int k, int) { return k < 32 ? 0.5 : 2.0; };

  auto run = [&](int n_paths, unsigned seed) {
    auto ens = sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, sysgrid, n_paths,
                               seed);
    TargetVariable t;
    t.values = stochastic_integral(ens, kappa);
    auto sys = build_dissecting_system(grid, ens.marks, 1);
    auto field = estimate_derivative(ens, t, sys, 1, count_basis());
    double err = 0.0;
    std::size_t cnt = 0;
    for (std::size_t c = 0; c < field.cells.size(); ++c) {
      const double truth = kappa(0, field.cells[c].cell.step_lo, 0);
      for (int p = 0; p < ens.n_paths; ++p) {
        const double e = field.value(p, static_cast<int>(c)) - truth;
        err += e * e;
        ++cnt;
      }
    }
    return std::sqrt(err / cnt);
  };

  // The realized error is heavy-tailed path to path, so compare seed averages.
  double coarse = 0.0, fine = 0.0;
  for (unsigned seed : {77u, 177u, 277u}) {
    coarse += run(4000, seed) / 3.0;
    fine += run(64000, seed) / 3.0;
  }
  REQUIRE(coarse < 0.12);
  REQUIRE(fine < 0.6 * coarse);  // error shrinks roughly like 1/sqrt(n)
}

TEST_CASE("degenerate cells are dropped and reported", "[derivative]") {
  // A stopped-style ensemble with zero intensity everywhere past step 8.
  const TimeGrid grid(1.0, 16);
  auto ens = sample_ensemble(NoiseModel::compensated_poisson({1.0}), grid, MarkSpace::range(1),
                             500, 403);
  ens.allow_zero_intensity = true;
  for (int p = 0; p < ens.n_paths; ++p)
    for (int k = 8; k < 16; ++k) {
      ens.intensity[ens.idx(p, k, 0)] = 0.0;
      ens.counts[ens.idx(p, k, 0)] = 0.0;
      ens.increments[ens.idx(p, k, 0)] = 0.0;
    }
  auto sys = build_dissecting_system(grid, ens.marks, 1);
  TargetVariable t;
  t.values.assign(ens.n_paths, 1.0);
  auto field = estimate_derivative(ens, t, sys, 1, count_basis());
  REQUIRE(field.dropped_cells.size() == 1);
  REQUIRE(field.cells[field.dropped_cells[0]].cell.step_lo == 8);
  for (int p = 0; p < ens.n_paths; ++p) REQUIRE(field.value(p, field.dropped_cells[0]) == 0.0);
}
