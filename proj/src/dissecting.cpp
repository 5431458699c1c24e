#include "stomax/dissecting.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stomax/stats.hpp"

namespace stomax {

int DissectingSystem::cell_index(int level, int step, int mark) const {
  const int n_time = 1 << level;
  const int width = grid.n_steps / n_time;
  const int tcell = step / width;
  return tcell * marks.size() + mark;
}

std::vector<int> DissectingSystem::anchor_steps(int level) const {
  const int n_time = 1 << level;
  const int width = grid.n_steps / n_time;
  std::vector<int> out(n_time);
  for (int j = 0; j < n_time; ++j) out[j] = j * width;
  return out;
}

DissectingSystem build_dissecting_system(const TimeGrid& grid, const MarkSpace& marks,
                                         int max_level) {
  if (max_level < 0) throw std::invalid_argument("build_dissecting_system: negative level");
  const int denom = 1 << max_level;
  if (denom > grid.n_steps || grid.n_steps % denom != 0)
    throw std::invalid_argument("build_dissecting_system: grid not divisible by 2^max_level");

  DissectingSystem sys;
  sys.grid = grid;
  sys.marks = marks;
  sys.max_level = max_level;
  const int M = marks.size();

  for (int n = 0; n <= max_level; ++n) {
    DissectingSystem::Level lvl;
    const int n_time = 1 << n;
    const int width = grid.n_steps / n_time;
    for (int j = 0; j < n_time; ++j)
      for (int z = 0; z < M; ++z) {
        lvl.cells.emplace_back(j * width, (j + 1) * width, z);
        lvl.parent.push_back(n == 0 ? -1 : (j / 2) * M + z);
      }
    lvl.mesh = grid.horizon / n_time;
    lvl.mesh_bound = grid.horizon * std::pow(2.0, -n);
    sys.levels.push_back(std::move(lvl));
  }
  return sys;
}

SystemReport verify_system(const DissectingSystem& system, const PathEnsemble& ens) {
  if (system.grid.n_steps != ens.grid.n_steps || system.marks.size() != ens.marks.size())
    throw std::invalid_argument("verify_system: system and ensemble are misaligned");

  SystemReport rep;
  rep.structure_ok = true;
  rep.mesh_within_bounds = true;

  // Variance-bound scale: twice the per-unit-time mean intensity (largest mark).
  double rate = 0.0;
  {
    const int M = ens.marks.size();
    const std::size_t per_mark = ens.intensity.size() / M;
    for (int z = 0; z < M; ++z) {
      double s = 0.0;
      for (std::size_t i = 0; i < per_mark; ++i)
        s += ens.intensity[i * M + z];
      rate = std::max(rate, s / static_cast<double>(per_mark));
    }
  }

  double prev_maxv = 0.0;
  rep.variance_decreasing = true;
  for (int n = 0; n <= system.max_level; ++n) {
    const auto& lvl = system.levels[n];
    LevelReport lr;
    lr.level = n;
    lr.mesh = lvl.mesh;
    lr.mesh_bound = lvl.mesh_bound;

    // Disjointness and coverage are exact index relations.
    lr.disjoint = true;
    for (std::size_t a = 0; a < lvl.cells.size() && lr.disjoint; ++a)
      for (std::size_t b = a + 1; b < lvl.cells.size(); ++b)
        if (!lvl.cells[a].disjoint(lvl.cells[b])) {
          lr.disjoint = false;
          break;
        }
    std::size_t covered = 0;
    for (const auto& c : lvl.cells)
      covered += static_cast<std::size_t>(c.step_hi - c.step_lo) * c.marks.size();
    lr.covers = covered == static_cast<std::size_t>(ens.grid.n_steps) * ens.marks.size();

    lr.nested = true;
    if (n > 0) {
      const auto& up = system.levels[n - 1];
      for (std::size_t j = 0; j < lvl.cells.size(); ++j) {
        const Cell& child = lvl.cells[j];
        const Cell& parent = up.cells[lvl.parent[j]];
        const bool inside = parent.step_lo <= child.step_lo && child.step_hi <= parent.step_hi &&
                            parent.marks == child.marks;
        if (!inside) {
          lr.nested = false;
          break;
        }
      }
    }

    double maxv = 0.0;
    std::vector<double> sq(ens.n_paths);
    for (const auto& c : lvl.cells) {
      for (int p = 0; p < ens.n_paths; ++p) {
        const double m = ens.cell_increment(p, c);
        sq[p] = m * m;
      }
      maxv = std::max(maxv, stats::mean(sq));
    }
    lr.max_empirical_variance = maxv;
    lr.variance_bound = 2.0 * rate * lvl.mesh;

    if (n > 0 && maxv >= prev_maxv) rep.variance_decreasing = false;
    prev_maxv = maxv;

    if (!(lr.disjoint && lr.covers && lr.nested)) rep.structure_ok = false;
    if (lr.mesh > lr.mesh_bound) rep.mesh_within_bounds = false;
    rep.levels.push_back(lr);
  }
  return rep;
}

std::string dump_cells(const DissectingSystem& system) {
  std::ostringstream os;
  os << "level\tk\tt_a\tt_b\tmark\n";
  for (int n = 0; n <= system.max_level; ++n) {
    const auto& lvl = system.levels[n];
    for (std::size_t k = 0; k < lvl.cells.size(); ++k) {
      const Cell& c = lvl.cells[k];
      os << n << '\t' << k << '\t' << system.grid.t(c.step_lo) << '\t'
         << system.grid.t(c.step_hi) << '\t' << system.marks.labels[c.marks[0]] << '\n';
    }
  }
  return os.str();
}

}  // namespace stomax
