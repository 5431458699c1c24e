#pragma once

#include <string>
#include <vector>

#include "stomax/ensemble.hpp"
#include "stomax/grid.hpp"

namespace stomax {

/// Nested dyadic partitions of [0,T] x marks: level n holds 2^n time cells
/// per mark, each a single-mark (t,s] x {z}. Level n+1 cells split their
/// level-n parent's time interval in half.
struct DissectingSystem {
  TimeGrid grid;
  MarkSpace marks;
  int max_level = 0;

  struct Level {
    std::vector<Cell> cells;           // K_n = 2^n * |marks| entries
    std::vector<int> parent;           // index into the previous level (-1 at level 0)
    double mesh = 0.0;                 // max time width
    double mesh_bound = 0.0;           // T * 2^-n
  };
  std::vector<Level> levels;  // levels[0..max_level]

  const std::vector<Cell>& cells_at(int level) const { return levels.at(level).cells; }
  int cells_per_level(int level) const { return static_cast<int>(levels.at(level).cells.size()); }
  /// Index of the level cell containing (step, mark).
  int cell_index(int level, int step, int mark) const;
  /// Left-endpoint steps of the level's time cells (ascending).
  std::vector<int> anchor_steps(int level) const;
};

/// Builds the system; requires n_steps divisible by 2^max_level.
DissectingSystem build_dissecting_system(const TimeGrid& grid, const MarkSpace& marks,
                                         int max_level);

struct LevelReport {
  int level = 0;
  bool disjoint = false, covers = false, nested = false;
  double mesh = 0.0, mesh_bound = 0.0;
  double max_empirical_variance = 0.0;
  double variance_bound = 0.0;
};

struct SystemReport {
  std::vector<LevelReport> levels;
  bool structure_ok = false;           // disjoint + covers + nested at every level
  bool variance_decreasing = false;    // max empirical V(cell) decreasing in level
  bool mesh_within_bounds = false;
};

/// Structural checks (exact set relations) plus empirical per-cell variance
/// against the level bounds.
SystemReport verify_system(const DissectingSystem& system, const PathEnsemble& ens);

/// Audit dump: one line per cell (level, k, t_a, t_b, mark).
std::string dump_cells(const DissectingSystem& system);

}  // namespace stomax
