#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "stomax/dissecting.hpp"
#include "stomax/ensemble.hpp"
#include "stomax/stats.hpp"

using namespace stomax;

TEST_CASE("brownian increments: martingale mean over the full horizon", "[noise]") {
  const TimeGrid grid(1.0, 100);
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 10000, 2024);
  std::vector<double> w_T(ens.n_paths);
  const Cell full(0, grid.n_steps, 0);
  for (int p = 0; p < ens.n_paths; ++p) w_T[p] = ens.cell_increment(p, full);
  const auto ms = stats::mean_se(w_T);
  REQUIRE(std::abs(ms.value) <= 4.0 / std::sqrt(1e4));
}

TEST_CASE("compensated poisson: raw count mean is lambda*T", "[noise]") {
  const TimeGrid grid(1.0, 100);
  auto ens =
      sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1), 10000, 7);
  std::vector<double> h_T(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p) h_T[p] = ens.running_count(p, grid.n_steps, 0);
  const auto ms = stats::mean_se(h_T);
  REQUIRE(std::abs(ms.value - 2.0) <= 4.0 * ms.se);
  // Spec'd tolerance at these sizes: 4*sqrt(lambda*T/n) ~ 0.057.
  REQUIRE(std::abs(ms.value - 2.0) <= 0.057);
}

TEST_CASE("degenerate cox process matches plain poisson counts", "[noise]") {
  const TimeGrid grid(1.0, 64);
  const int n = 20000;
  auto pois =
      sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1), n, 5);
  CoxDriverParams flat;
  flat.initial = 2.0;
  flat.long_run = 2.0;
  flat.mean_reversion = 0.0;
  flat.vol = 0.0;
  auto cox = sample_ensemble(NoiseModel::doubly_stochastic({flat}), grid, MarkSpace::range(1), n, 6);

  // Two-sample chi-square on terminal count histograms.
  const int bins = 10;  // 0..8, then 9+
  std::vector<double> ha(bins, 0.0), hb(bins, 0.0);
  for (int p = 0; p < n; ++p) {
    const int a = std::min(bins - 1, static_cast<int>(pois.running_count(p, grid.n_steps, 0)));
    const int b = std::min(bins - 1, static_cast<int>(cox.running_count(p, grid.n_steps, 0)));
    ha[a] += 1.0;
    hb[b] += 1.0;
  }
  double chi2 = 0.0;
  int dof = 0;
  for (int i = 0; i < bins; ++i) {
    const double tot = ha[i] + hb[i];
    if (tot < 10.0) continue;
    const double diff = ha[i] - hb[i];
    chi2 += diff * diff / tot;  // equal sample sizes
    ++dof;
  }
  --dof;
  // 99.9% chi-square quantiles for the dof values that can appear here.
  const double crit[] = {0, 10.83, 13.82, 16.27, 18.47, 20.52, 22.46, 24.32, 26.12, 27.88};
  REQUIRE(dof >= 3);
  REQUIRE(chi2 < crit[dof]);
}

TEST_CASE("cox intensities stay positive and vary", "[noise]") {
  const TimeGrid grid(1.0, 64);
  CoxDriverParams d;
  d.initial = 2.0;
  d.long_run = 2.0;
  d.mean_reversion = 1.0;
  d.vol = 1.0;
  auto ens = sample_ensemble(NoiseModel::doubly_stochastic({d}), grid, MarkSpace::range(1), 500, 8);
  double lo = 1e300, hi = 0.0;
  for (double l : ens.intensity) {
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  REQUIRE(lo >= kIntensityFloor);
  REQUIRE(hi > 2.5);  // actually stochastic
}

TEST_CASE("compensation identity holds cell-wise", "[noise]") {
  const TimeGrid grid(1.0, 64);
  auto ens =
      sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1), 200, 9);
  for (int p = 0; p < ens.n_paths; ++p)
    for (int k = 0; k < grid.n_steps; ++k)
      REQUIRE(ens.incr(p, k, 0) == ens.count(p, k, 0) - ens.lambda(p, k, 0) * grid.dt());
}

TEST_CASE("same seed reproduces the ensemble bit-exactly", "[noise]") {
  const TimeGrid grid(0.5, 32);
  auto a = sample_ensemble(NoiseModel::compensated_poisson({1.5, 0.7}), grid, MarkSpace::range(2),
                           300, 4242);
  auto b = sample_ensemble(NoiseModel::compensated_poisson({1.5, 0.7}), grid, MarkSpace::range(2),
                           300, 4242);
  REQUIRE(a.increments == b.increments);
  REQUIRE(a.intensity == b.intensity);
  REQUIRE(a.counts == b.counts);
  auto c = sample_ensemble(NoiseModel::compensated_poisson({1.5, 0.7}), grid, MarkSpace::range(2),
                           300, 4243);
  REQUIRE(a.increments != c.increments);
}

TEST_CASE("model/mark mismatches are rejected", "[noise]") {
  const TimeGrid grid(1.0, 8);
  REQUIRE_THROWS_AS(sample_ensemble(NoiseModel::brownian(), grid, MarkSpace::range(2), 10, 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      sample_ensemble(NoiseModel::compensated_poisson({1.0}), grid, MarkSpace::range(2), 10, 1),
      std::invalid_argument);
  REQUIRE_THROWS_AS(NoiseModel::compensated_poisson({-1.0}), std::invalid_argument);
}

TEST_CASE("stochastic integral: isometry for constant and time integrands", "[noise]") {
  const TimeGrid grid(1.0, 100);
  const int n = 40000;

  SECTION("poisson, kappa = 1: second moment is lambda*T") {
    auto ens =
        sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1), n, 21);
    auto integral = stochastic_integral(ens, [](int, int, int) { return 1.0; });
    std::vector<double> sq(n);
    for (int p = 0; p < n; ++p) sq[p] = integral[p] * integral[p];
    const auto ms = stats::mean_se(sq);
    REQUIRE(std::abs(ms.value - 2.0) <= 4.0 * ms.se);
  }

  SECTION("brownian, kappa = 1: integral equals W_T, second moment T") {
    auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n, 22);
    auto integral = stochastic_integral(ens, [](int, int, int) { return 1.0; });
    const Cell full(0, grid.n_steps, 0);
    for (int p = 0; p < 100; ++p)
      REQUIRE(integral[p] == Catch::Approx(ens.cell_increment(p, full)).margin(1e-12));
    std::vector<double> sq(n);
    for (int p = 0; p < n; ++p) sq[p] = integral[p] * integral[p];
    const auto ms = stats::mean_se(sq);
    REQUIRE(std::abs(ms.value - 1.0) <= 4.0 * ms.se);
  }

  SECTION("brownian, kappa = t: second moment is the exact quadrature of t^2") {
    auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, n, 23);
    auto integral =
        stochastic_integral(ens, [&](int, int k, int) { return grid.t(k); });
    // Oracle: the discrete isometry sum, which converges to int_0^1 t^2 dt = 1/3.
    double expected = 0.0;
    for (int k = 0; k < grid.n_steps; ++k) expected += grid.t(k) * grid.t(k) * grid.dt();
    std::vector<double> sq(n);
    for (int p = 0; p < n; ++p) sq[p] = integral[p] * integral[p];
    const auto ms = stats::mean_se(sq);
    REQUIRE(std::abs(ms.value - expected) <= 4.0 * ms.se);
    REQUIRE(expected == Catch::Approx(1.0 / 3.0).margin(0.01));
  }
}

TEST_CASE("field property suite", "[noise]") {
  const TimeGrid grid(1.0, 64);
  auto ens =
      sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1), 20000, 31);
  auto sys = build_dissecting_system(grid, ens.marks, 3);
  auto rep = field_property_suite(ens, sys.cells_at(3));

  REQUIRE(rep.cells.size() == 8);
  REQUIRE(rep.pairs.size() == 8 * 7 / 2);
  REQUIRE(rep.max_abs_mean_z <= 4.5);
  REQUIRE(rep.max_abs_pair_z <= 4.5);
  REQUIRE(rep.max_abs_iso_z <= 4.5);
  // lambda*dt = 2/64 is a dyadic rational: additivity residuals vanish exactly.
  REQUIRE(rep.max_additivity_residual == 0.0);
}

TEST_CASE("brownian cell variance: V((0,0.5] x {0}) = 0.5", "[noise]") {
  const TimeGrid grid(1.0, 64);
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 20000, 33);
  const Cell half(0, 32, 0);
  std::vector<double> sq(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p) {
    const double m = ens.cell_increment(p, half);
    sq[p] = m * m;
  }
  const auto ms = stats::mean_se(sq);
  REQUIRE(std::abs(ms.value - 0.5) <= 4.0 * ms.se);
}

TEST_CASE("orthogonality check rejects overlapping cells", "[noise]") {
  const TimeGrid grid(1.0, 8);
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 50, 3);
  REQUIRE_THROWS_AS(orthogonality_pair(ens, Cell(0, 4, 0), Cell(2, 6, 0)), std::invalid_argument);
  REQUIRE_NOTHROW(orthogonality_pair(ens, Cell(0, 4, 0), Cell(4, 8, 0)));
}
