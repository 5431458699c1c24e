#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "stomax/ensemble.hpp"
#include "stomax/regression.hpp"

using namespace stomax;

namespace {

PathEnsemble small_poisson(int n_paths, unsigned seed) {
  return sample_ensemble(NoiseModel::compensated_poisson({2.0}), TimeGrid(1.0, 16),
                         MarkSpace::range(1), n_paths, seed);
}

}  // namespace

TEST_CASE("design expansion: intercept, linears, quadratics", "[regression]") {
  auto ens = small_poisson(100, 1);
  BasisSpec basis = BasisSpec::polynomial({{FeatureKind::RunningCount, -1}}, 2);
  DesignBuilder b(basis, {&ens, nullptr});
  REQUIRE(b.n_features() == 3);  // 1, h, h^2
  REQUIRE(b.names()[0] == "1");
  REQUIRE(b.names()[1] == "h[0]");
  REQUIRE(b.names()[2] == "h[0]*h[0]");

  const auto& d = b.at_step(4);
  for (int p = 0; p < 100; ++p) {
    REQUIRE(d[p] == 1.0);
    const double h = ens.running_count(p, 4, 0);
    REQUIRE(d[100 + p] == h);
    REQUIRE(d[200 + p] == h * h);
  }
}

TEST_CASE("features use only information before the step", "[regression]") {
  auto ens = small_poisson(50, 2);
  BasisSpec basis = BasisSpec::polynomial(
      {{FeatureKind::RunningCount, 0}, {FeatureKind::RunningNoise, 0}, {FeatureKind::Intensity, 0}},
      2);
  DesignBuilder b(basis, {&ens, nullptr});
  const auto design = b.at_step(8);

  // Corrupting future steps must not change the design at step 8.
  auto tampered = ens;
  for (int p = 0; p < tampered.n_paths; ++p)
    for (int k = 8; k < 16; ++k) {
      tampered.increments[tampered.idx(p, k, 0)] += 123.0;
      tampered.counts[tampered.idx(p, k, 0)] += 5.0;
    }
  DesignBuilder b2(basis, {&tampered, nullptr});
  REQUIRE(b2.at_step(8) == design);
}

TEST_CASE("ridge fit recovers exact linear structure", "[regression]") {
  auto ens = small_poisson(4000, 3);
  BasisSpec basis = BasisSpec::polynomial({{FeatureKind::RunningCount, 0}}, 2);
  DesignBuilder b(basis, {&ens, nullptr});
  const auto& design = b.at_step(8);

  // Response is an exact function in the basis span: 3 - 2h + 0.5 h^2.
  std::vector<double> y(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p) {
    const double h = ens.running_count(p, 8, 0);
    y[p] = 3.0 - 2.0 * h + 0.5 * h * h;
  }
  auto coeffs = ridge_fit(design, ens.n_paths, 3, y, 1e-10);
  REQUIRE(coeffs[0] == Catch::Approx(3.0).margin(1e-5));
  REQUIRE(coeffs[1] == Catch::Approx(-2.0).margin(1e-5));
  REQUIRE(coeffs[2] == Catch::Approx(0.5).margin(1e-5));

  auto fit = design_fitted(design, ens.n_paths, 3, coeffs);
  for (int p = 0; p < 50; ++p) REQUIRE(fit[p] == Catch::Approx(y[p]).margin(1e-4));
}

TEST_CASE("collinear design: ridge saves it, no ridge throws", "[regression]") {
  const int n = 64;
  std::vector<double> design(3 * n);
  for (int p = 0; p < n; ++p) {
    design[p] = 1.0;
    design[n + p] = 2.0;          // exact multiple of the intercept
    design[2 * n + p] = p * 0.5;
  }
  std::vector<double> y(n, 1.0);
  REQUIRE_THROWS_AS(ridge_fit(design, n, 3, y, 0.0), std::runtime_error);
  REQUIRE_NOTHROW(ridge_fit(design, n, 3, y, 1e-8));
}

TEST_CASE("state features require state paths", "[regression]") {
  auto ens = small_poisson(10, 4);
  BasisSpec basis = BasisSpec::polynomial({{FeatureKind::State, 0}}, 1);
  REQUIRE_THROWS_AS(DesignBuilder(basis, {&ens, nullptr}), std::invalid_argument);
}

TEST_CASE("count features rejected on continuous models", "[regression]") {
  auto ens = sample_ensemble(NoiseModel::brownian(), TimeGrid(1.0, 8), MarkSpace{}, 10, 5);
  BasisSpec basis = BasisSpec::polynomial({{FeatureKind::RunningCount, 0}}, 1);
  REQUIRE_THROWS_AS(DesignBuilder(basis, {&ens, nullptr}), std::invalid_argument);
}

TEST_CASE("out-of-order step access is rejected until rewind", "[regression]") {
  auto ens = small_poisson(10, 6);
  BasisSpec basis = BasisSpec::polynomial({{FeatureKind::RunningCount, 0}}, 1);
  DesignBuilder b(basis, {&ens, nullptr});
  b.at_step(8);
  REQUIRE_THROWS_AS(b.at_step(4), std::logic_error);
  b.rewind();
  REQUIRE_NOTHROW(b.at_step(4));
}
