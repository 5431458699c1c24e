#include "stomax/derivative.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stomax/simd.hpp"

namespace stomax {
namespace {

// Cells sorted by left endpoint so one DesignBuilder pass serves them all;
// cells sharing an anchor reuse the design and its factorization.
struct AnchorRun {
  int step = 0;
  std::vector<int> cell_ixs;
};

std::vector<AnchorRun> group_by_anchor(const std::vector<Cell>& cells) {
  std::vector<int> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cells[a].step_lo < cells[b].step_lo; });
  std::vector<AnchorRun> runs;
  for (int ix : order) {
    if (runs.empty() || runs.back().step != cells[ix].step_lo)
      runs.push_back({cells[ix].step_lo, {}});
    runs.back().cell_ixs.push_back(ix);
  }
  return runs;
}

DerivativeField estimate_on_cells(const PathEnsemble& ens, const TargetVariable& target,
                                  std::vector<Cell> cells, const BasisSpec& basis,
                                  const StatePaths* states, const EstimateOptions& opts,
                                  int level, int time_cells) {
  if (static_cast<int>(target.values.size()) != ens.n_paths)
    throw std::invalid_argument("estimate_derivative: target size mismatch");

  DerivativeField field;
  field.level = level;
  field.time_cells = time_cells;
  field.basis = basis;
  field.n_paths = ens.n_paths;
  field.cells.resize(cells.size());
  field.fitted.assign(cells.size() * static_cast<std::size_t>(ens.n_paths), 0.0);

  FeatureContext ctx{&ens, states};
  DesignBuilder builder(basis, ctx);
  const int n = ens.n_paths;
  const int k = builder.n_features();

  auto runs = group_by_anchor(cells);
  std::vector<double> response(n);
  int kept = 0;
  for (const auto& run : runs) {
    const auto& design = builder.at_step(run.step);
    std::optional<CholFactor> factor;  // lazily built; shared across the anchor's cells
    for (int ci : run.cell_ixs) {
      auto& est = field.cells[ci];
      est.cell = std::move(cells[ci]);

      double mean_comp = 0.0;
      for (int p = 0; p < n; ++p) {
        const double comp = ens.cell_compensator(p, est.cell);
        mean_comp += comp;
        const double denom = comp > opts.clamp ? comp : opts.clamp;
        response[p] = target.values[p] * ens.cell_increment(p, est.cell) / denom;
      }
      mean_comp /= n;
      est.mean_compensator = mean_comp;
      if (mean_comp < opts.drop_threshold) {
        est.dropped = true;
        est.coeffs.assign(k, 0.0);
        field.dropped_cells.push_back(ci);
        continue;
      }
      if (!factor) factor = gram_cholesky(design, n, k, basis.ridge_rel);
      auto rhs = design_rhs(design, n, k, response);
      factor->solve_in_place(rhs);
      est.coeffs = rhs;
      auto fit = design_fitted(design, n, k, est.coeffs);
      std::copy(fit.begin(), fit.end(),
                field.fitted.begin() + static_cast<std::size_t>(ci) * n);
      ++kept;
    }
  }
  if (kept == 0) throw std::runtime_error("estimate_derivative: all cells dropped");
  return field;
}

}  // namespace

int DerivativeField::cell_index(int step, int mark, const TimeGrid& grid, int n_marks) const {
  if (level < 0 || time_cells <= 0)
    throw std::logic_error("DerivativeField: cell lookup needs a level field");
  const int width = grid.n_steps / time_cells;
  return (step / width) * n_marks + mark;
}

std::vector<double> DerivativeField::evaluate(const FeatureContext& ctx) const {
  DesignBuilder builder(basis, ctx);
  const int n = builder.n_paths();
  const int k = builder.n_features();
  std::vector<double> out(cells.size() * static_cast<std::size_t>(n), 0.0);

  std::vector<Cell> shapes;
  shapes.reserve(cells.size());
  for (const auto& c : cells) shapes.push_back(c.cell);
  for (const auto& run : group_by_anchor(shapes)) {
    const auto& design = builder.at_step(run.step);
    for (int ci : run.cell_ixs) {
      if (cells[ci].dropped) continue;
      auto fit = design_fitted(design, n, k, cells[ci].coeffs);
      std::copy(fit.begin(), fit.end(), out.begin() + static_cast<std::size_t>(ci) * n);
    }
  }
  return out;
}

std::vector<double> DerivativeField::integral_against(
    const PathEnsemble& ens, const std::vector<double>& fitted_values) const {
  std::vector<double> out(ens.n_paths, 0.0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].dropped) continue;
    const double* fit = fitted_values.data() + c * ens.n_paths;
    for (int p = 0; p < ens.n_paths; ++p) out[p] += fit[p] * ens.cell_increment(p, cells[c].cell);
  }
  return out;
}

DerivativeField estimate_derivative(const PathEnsemble& ens, const TargetVariable& target,
                                    const DissectingSystem& system, int level,
                                    const BasisSpec& basis, const StatePaths* states,
                                    const EstimateOptions& opts) {
  if (level < 0 || level > system.max_level)
    throw std::invalid_argument("estimate_derivative: level outside the system");
  if (system.grid.n_steps != ens.grid.n_steps || system.marks.size() != ens.marks.size())
    throw std::invalid_argument("estimate_derivative: system/ensemble misaligned");
  return estimate_on_cells(ens, target, system.cells_at(level), basis, states, opts, level,
                           1 << level);
}

DerivativeField estimate_derivative_cells(const PathEnsemble& ens, const TargetVariable& target,
                                          std::vector<Cell> cells, const BasisSpec& basis,
                                          const StatePaths* states, const EstimateOptions& opts) {
  return estimate_on_cells(ens, target, std::move(cells), basis, states, opts, -1, 0);
}

DualityRecord duality_gap(const PathEnsemble& ens, const TargetVariable& target,
                          const std::function<double(int, int, int)>& kappa,
                          const DerivativeField& field, const StatePaths* states) {
  if (static_cast<int>(target.values.size()) != ens.n_paths)
    throw std::invalid_argument("duality_gap: target size mismatch");
  const int n = ens.n_paths;
  const double dt = ens.grid.dt();

  auto integral = stochastic_integral(ens, kappa);
  std::vector<double> lhs(n), rhs(n, 0.0), diff(n);
  for (int p = 0; p < n; ++p) lhs[p] = target.values[p] * integral[p];

  FeatureContext ctx{&ens, states};
  auto fitted = field.evaluate(ctx);
  const int k_features = field.cells.empty() ? 1 : static_cast<int>(field.cells[0].coeffs.size());
  double fit_var = 0.0;
  std::vector<double> resp(n);
  for (std::size_t c = 0; c < field.cells.size(); ++c) {
    const auto& est = field.cells[c];
    if (est.dropped) continue;
    const double* fit = fitted.data() + c * static_cast<std::size_t>(n);
    double weight_sum = 0.0;
    for (int p = 0; p < n; ++p) {
      double s = 0.0;
      for (int k = est.cell.step_lo; k < est.cell.step_hi; ++k)
        for (int z : est.cell.marks) s += kappa(p, k, z) * ens.lambda(p, k, z) * dt;
      rhs[p] += fit[p] * s;
      weight_sum += s;
      const double comp = ens.cell_compensator(p, est.cell);
      resp[p] = target.values[p] * ens.cell_increment(p, est.cell) / (comp > 1e-12 ? comp : 1e-12);
    }
    const double wbar = weight_sum / n;
    const auto rs = stats::mean_se(resp);
    fit_var += wbar * wbar * k_features * (rs.se * rs.se);
  }
  for (int p = 0; p < n; ++p) diff[p] = lhs[p] - rhs[p];

  DualityRecord rec;
  const auto l = stats::mean_se(lhs);
  const auto r = stats::mean_se(rhs);
  const auto d = stats::mean_se(diff);
  rec.lhs = l.value;
  rec.se_lhs = l.se;
  rec.rhs = r.value;
  rec.se_rhs = r.se;
  rec.gap = d.value;
  rec.se_gap = d.se;
  rec.se_fit = std::sqrt(fit_var);
  return rec;
}

RepresentationRecord representation_residual(const PathEnsemble& ens,
                                             const TargetVariable& target,
                                             const DerivativeField& field,
                                             const StatePaths* states) {
  const int n = ens.n_paths;
  FeatureContext ctx{&ens, states};
  auto fitted = field.evaluate(ctx);
  auto integral = field.integral_against(ens, fitted);

  RepresentationRecord rec;
  const double xi0 = stats::mean(target.values);
  rec.xi0_estimate = xi0;
  std::vector<double> resid(n);
  for (int p = 0; p < n; ++p) resid[p] = target.values[p] - xi0 - integral[p];
  {
    const auto ms = stats::mean_se(resid);
    rec.residual_variance = ms.se * ms.se * n;
  }
  {
    const auto ms = stats::mean_se(target.values);
    rec.target_variance = ms.se * ms.se * n;
  }

  const int K = ens.grid.n_steps;
  const int M = ens.marks.size();
  std::vector<std::pair<std::string, std::function<double(int, int, int)>>> probes;
  for (int z = 0; z < M; ++z) {
    probes.emplace_back("full_mark" + std::to_string(z),
                        [z](int, int, int zz) { return zz == z ? 1.0 : 0.0; });
    probes.emplace_back("first_half_mark" + std::to_string(z), [z, K](int, int k, int zz) {
      return (zz == z && k < K / 2) ? 1.0 : 0.0;
    });
    probes.emplace_back("second_half_mark" + std::to_string(z), [z, K](int, int k, int zz) {
      return (zz == z && k >= K / 2) ? 1.0 : 0.0;
    });
  }
  probes.emplace_back("time_weight",
                      [&ens](int, int k, int) { return ens.grid.t(k); });

  std::vector<double> prod(n);
  for (auto& [name, fn] : probes) {
    auto probe_integral = stochastic_integral(ens, fn);
    for (int p = 0; p < n; ++p) prod[p] = resid[p] * probe_integral[p];
    const auto ms = stats::mean_se(prod);
    RepresentationRecord::Probe pr;
    pr.name = name;
    pr.z = stats::z_score(ms);
    rec.max_abs_z = std::max(rec.max_abs_z, std::abs(pr.z));
    rec.orthogonality.push_back(std::move(pr));
  }
  return rec;
}

}  // namespace stomax
