#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stomax/grid.hpp"

namespace stomax {

/// Mean-reverting positive intensity recursion for the doubly stochastic
/// model: lam' = lam + a(theta - lam) dt + vol sqrt(lam dt) xi, floored at
/// kIntensityFloor (full truncation).
struct CoxDriverParams {
  double initial = 1.0;
  double mean_reversion = 0.0;
  double long_run = 1.0;
  double vol = 0.0;
};

inline constexpr double kIntensityFloor = 1e-8;

enum class NoiseKind { Brownian, CompensatedPoisson, DoublyStochasticPoisson };

struct NoiseModel {
  NoiseKind kind = NoiseKind::Brownian;
  std::vector<double> intensities;        // per mark, CompensatedPoisson
  std::vector<CoxDriverParams> drivers;   // per mark, DoublyStochasticPoisson

  static NoiseModel brownian();
  static NoiseModel compensated_poisson(std::vector<double> intensities);
  static NoiseModel doubly_stochastic(std::vector<CoxDriverParams> drivers);

  bool counting() const { return kind != NoiseKind::Brownian; }
  std::string tag() const;
};

/// Monte Carlo sample of noise increments mu((t_k,t_{k+1}]x{z}) and the
/// conditional-variance densities lambda_{t_k}(z) on a grid x mark space.
/// Layout is path-major: index (p, k, z) = (p*K + k)*M + z.
struct PathEnsemble {
  TimeGrid grid;
  MarkSpace marks;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::string model_tag;
  bool has_counts = false;
  bool allow_zero_intensity = false;  // derived (stopped) fields only

  std::vector<double> increments;
  std::vector<double> intensity;
  std::vector<double> counts;

  std::size_t idx(int p, int k, int z) const {
    return (static_cast<std::size_t>(p) * grid.n_steps + k) * marks.size() + z;
  }
  double incr(int p, int k, int z) const { return increments[idx(p, k, z)]; }
  double lambda(int p, int k, int z) const { return intensity[idx(p, k, z)]; }
  double count(int p, int k, int z) const { return counts[idx(p, k, z)]; }

  std::span<const double> path_increments(int p) const {
    const std::size_t len = static_cast<std::size_t>(grid.n_steps) * marks.size();
    return {increments.data() + static_cast<std::size_t>(p) * len, len};
  }
  std::span<const double> path_intensity(int p) const {
    const std::size_t len = static_cast<std::size_t>(grid.n_steps) * marks.size();
    return {intensity.data() + static_cast<std::size_t>(p) * len, len};
  }

  /// mu(cell) for one path (plain ordered sum over covered entries).
  double cell_increment(int p, const Cell& c) const;
  /// Lambda(cell) = sum of lambda * dt over covered entries.
  double cell_compensator(int p, const Cell& c) const;
  /// Running value sum_{j<k} mu over one mark ("noise level" at t_k).
  double running_increment(int p, int k, int z) const;
  double running_count(int p, int k, int z) const;
};

/// Simulates the model; deterministic in (seed, n_paths, grid, marks) and
/// independent of thread count.
PathEnsemble sample_ensemble(const NoiseModel& model, const TimeGrid& grid, const MarkSpace& marks,
                             int n_paths, std::uint64_t seed);

/// Per-path value of the stochastic integral of a predictable integrand.
/// Values at step k must only use information up to t_k (caller contract;
/// not checkable here).
std::vector<double> stochastic_integral(const PathEnsemble& ens, std::span<const double> integrand);
std::vector<double> stochastic_integral(const PathEnsemble& ens,
                                        const std::function<double(int, int, int)>& integrand);

/// Auxiliary randomness independent of every noise substream (targets that
/// should have zero derivative field).
std::vector<double> external_gaussians(std::uint64_t seed, int n_paths);

struct CellCheck {
  Cell cell;
  double mean = 0.0, se = 0.0, z = 0.0;          // martingale mean
  double iso_gap = 0.0, iso_se = 0.0, iso_z = 0.0;  // E[mu^2] - E[Lambda]
  double additivity_residual = 0.0;               // max |mu(cell)-mu(left)-mu(right)|
};

struct PairCheck {
  int cell_a = 0, cell_b = 0;
  double mean = 0.0, se = 0.0, z = 0.0;  // E[mu(A) mu(B)] for disjoint cells
};

struct FieldCheckReport {
  std::vector<CellCheck> cells;
  std::vector<PairCheck> pairs;
  double max_abs_mean_z = 0.0;
  double max_abs_pair_z = 0.0;
  double max_abs_iso_z = 0.0;
  double max_additivity_residual = 0.0;
  double fraction_mean_within(double z) const;
  double fraction_pairs_within(double z) const;
};

/// Empirical checks of the defining field properties on the given cells:
/// per-cell martingale-mean z-scores, pairwise orthogonality z-scores for
/// all disjoint pairs, exact additivity residuals, isometry gaps.
FieldCheckReport field_property_suite(const PathEnsemble& ens, const std::vector<Cell>& cells);

/// Orthogonality z-score for one explicit pair; throws if the cells overlap.
PairCheck orthogonality_pair(const PathEnsemble& ens, const Cell& a, const Cell& b);

}  // namespace stomax
