#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stomax/dissecting.hpp"
#include "stomax/ensemble.hpp"

using namespace stomax;

TEST_CASE("dyadic construction counts and widths", "[dissect]") {
  const TimeGrid grid(1.0, 64);
  auto sys = build_dissecting_system(grid, MarkSpace::range(2), 3);
  REQUIRE(sys.levels.size() == 4);
  REQUIRE(sys.cells_per_level(3) == 16);
  for (const auto& c : sys.cells_at(3)) {
    REQUIRE(c.step_hi - c.step_lo == 8);  // 1/8 of 64 steps
    REQUIRE(c.marks.size() == 1);
  }
  REQUIRE(sys.cells_per_level(0) == 2);
  REQUIRE(sys.cells_at(0)[0].step_lo == 0);
  REQUIRE(sys.cells_at(0)[0].step_hi == 64);
}

TEST_CASE("every child cell sits inside its parent", "[dissect]") {
  const TimeGrid grid(2.0, 32);
  auto sys = build_dissecting_system(grid, MarkSpace::range(3), 4);
  for (int n = 1; n <= 4; ++n) {
    const auto& lvl = sys.levels[n];
    const auto& up = sys.levels[n - 1];
    for (std::size_t j = 0; j < lvl.cells.size(); ++j) {
      const Cell& child = lvl.cells[j];
      const Cell& parent = up.cells[lvl.parent[j]];
      REQUIRE(parent.step_lo <= child.step_lo);
      REQUIRE(child.step_hi <= parent.step_hi);
      REQUIRE(parent.marks == child.marks);
    }
  }
}

TEST_CASE("max_level 0 is a single time cell per mark", "[dissect]") {
  auto sys = build_dissecting_system(TimeGrid(1.0, 10), MarkSpace::range(2), 0);
  REQUIRE(sys.cells_per_level(0) == 2);
  for (const auto& c : sys.cells_at(0)) {
    REQUIRE(c.step_lo == 0);
    REQUIRE(c.step_hi == 10);
  }
}

TEST_CASE("misaligned grids are rejected", "[dissect]") {
  REQUIRE_THROWS_AS(build_dissecting_system(TimeGrid(1.0, 10), MarkSpace{}, 2),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(build_dissecting_system(TimeGrid(1.0, 4), MarkSpace{}, 3),
                    std::invalid_argument);
  REQUIRE_NOTHROW(build_dissecting_system(TimeGrid(1.0, 12), MarkSpace{}, 2));
}

TEST_CASE("verify_system: structure exact, variance scaling matches the model", "[dissect]") {
  const TimeGrid grid(1.0, 64);
  auto ens =
      sample_ensemble(NoiseModel::compensated_poisson({2.0}), grid, MarkSpace::range(1), 20000, 77);
  auto sys = build_dissecting_system(grid, ens.marks, 4);
  auto rep = verify_system(sys, ens);

  REQUIRE(rep.structure_ok);
  REQUIRE(rep.mesh_within_bounds);
  REQUIRE(rep.variance_decreasing);
  for (const auto& lr : rep.levels) {
    // V(cell) = lambda * |cell| = 2 * 2^-level for this model.
    const double expect = 2.0 * std::pow(2.0, -lr.level);
    REQUIRE(lr.max_empirical_variance == Catch::Approx(expect).epsilon(0.10));
    REQUIRE(lr.max_empirical_variance < lr.variance_bound);
  }
}

TEST_CASE("verify_system: brownian variance is the cell width", "[dissect]") {
  const TimeGrid grid(1.0, 64);
  auto ens = sample_ensemble(NoiseModel::brownian(), grid, MarkSpace{}, 20000, 78);
  auto sys = build_dissecting_system(grid, ens.marks, 3);
  auto rep = verify_system(sys, ens);
  for (const auto& lr : rep.levels)
    REQUIRE(lr.max_empirical_variance == Catch::Approx(std::pow(2.0, -lr.level)).epsilon(0.10));
}

TEST_CASE("cell audit dump lists every level", "[dissect]") {
  auto sys = build_dissecting_system(TimeGrid(1.0, 8), MarkSpace::range(2), 2);
  const auto text = dump_cells(sys);
  // header + (1+2+4) time cells x 2 marks
  std::size_t lines = 0;
  for (char ch : text)
    if (ch == '\n') ++lines;
  REQUIRE(lines == 1 + 2 + 4 + 8);
}

TEST_CASE("anchor steps are the cells' left endpoints", "[dissect]") {
  auto sys = build_dissecting_system(TimeGrid(1.0, 16), MarkSpace{}, 2);
  REQUIRE(sys.anchor_steps(2) == std::vector<int>{0, 4, 8, 12});
  REQUIRE(sys.cell_index(2, 5, 0) == 1);
  REQUIRE(sys.cell_index(2, 15, 0) == 3);
}
