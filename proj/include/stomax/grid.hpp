#pragma once

#include <stdexcept>
#include <vector>

namespace stomax {

/// Uniform grid 0 = t_0 < ... < t_K = T.
struct TimeGrid {
  double horizon = 1.0;
  int n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double T, int steps) : horizon(T), n_steps(steps) {
    if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
  }
  double dt() const { return horizon / n_steps; }
  double t(int k) const { return horizon * static_cast<double>(k) / n_steps; }
};

/// Finite ordered mark space; {0} for Brownian noise.
struct MarkSpace {
  std::vector<int> labels;

  MarkSpace() : labels{0} {}
  explicit MarkSpace(std::vector<int> l) : labels(std::move(l)) {
    if (labels.empty()) throw std::invalid_argument("MarkSpace: empty");
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = i + 1; j < labels.size(); ++j)
        if (labels[i] == labels[j]) throw std::invalid_argument("MarkSpace: duplicate label");
  }
  static MarkSpace range(int n) {  // {1,...,n}
    std::vector<int> l;
    for (int z = 1; z <= n; ++z) l.push_back(z);
    return MarkSpace(std::move(l));
  }
  int size() const { return static_cast<int>(labels.size()); }
};

/// Grid-aligned set (t_a, t_b] x Z, with Z a set of mark indices.
struct Cell {
  int step_lo = 0;  // exclusive left endpoint index a: covers steps a..b-1
  int step_hi = 0;
  std::vector<int> marks;  // indices into MarkSpace

  Cell() = default;
  Cell(int lo, int hi, std::vector<int> m) : step_lo(lo), step_hi(hi), marks(std::move(m)) {
    if (!(step_lo < step_hi)) throw std::invalid_argument("Cell: empty time interval");
    if (marks.empty()) throw std::invalid_argument("Cell: empty mark set");
  }
  Cell(int lo, int hi, int mark) : Cell(lo, hi, std::vector<int>{mark}) {}

  bool contains(int step, int mark) const {
    if (step < step_lo || step >= step_hi) return false;
    for (int m : marks)
      if (m == mark) return true;
    return false;
  }
  bool disjoint(const Cell& o) const {
    if (step_hi <= o.step_lo || o.step_hi <= step_lo) return true;
    for (int m : marks)
      for (int om : o.marks)
        if (m == om) return false;
    return true;
  }
};

}  // namespace stomax
