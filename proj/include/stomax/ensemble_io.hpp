#pragma once

#include <string>

#include "stomax/adjoint.hpp"
#include "stomax/derivative.hpp"
#include "stomax/ensemble.hpp"
#include "stomax/paths.hpp"

namespace stomax {

/// Columnar binary dump (little-endian doubles) with a small header:
/// grid, marks, seed, model tag, then increments/intensity/counts arrays.
void write_ensemble_binary(const PathEnsemble& ens, const std::string& path);
PathEnsemble read_ensemble_binary(const std::string& path);

/// CSV export (one row per path x step x mark); intended for small runs.
void write_ensemble_csv(const PathEnsemble& ens, const std::string& path);

/// Field export: level, cell, t_a, t_b, mark, coefficients.
void write_field_csv(const DerivativeField& field, const TimeGrid& grid, const MarkSpace& marks,
                     const std::string& path);

/// State paths: path, step, t, X, controls.
void write_states_csv(const StatePaths& states, const TimeGrid& grid, const std::string& path);

/// Adjoint bundle, per-path file (t, K, F, p) and per-anchor file
/// (t, mark, kappa coefficients).
void write_adjoint_csv(const AdjointBundle& bundle, const TimeGrid& grid,
                       const std::string& per_path_file, const std::string& per_anchor_file);

}  // namespace stomax
