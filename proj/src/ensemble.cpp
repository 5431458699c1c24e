#include "stomax/ensemble.hpp"

#include <cmath>
#include <stdexcept>

#include "stomax/parallel.hpp"
#include "stomax/philox.hpp"
#include "stomax/simd.hpp"
#include "stomax/stats.hpp"

namespace stomax {

NoiseModel NoiseModel::brownian() {
  NoiseModel m;
  m.kind = NoiseKind::Brownian;
  return m;
}

NoiseModel NoiseModel::compensated_poisson(std::vector<double> intensities) {
  for (double l : intensities)
    if (!(l > 0.0)) throw std::invalid_argument("NoiseModel: intensity must be positive");
  NoiseModel m;
  m.kind = NoiseKind::CompensatedPoisson;
  m.intensities = std::move(intensities);
  return m;
}

NoiseModel NoiseModel::doubly_stochastic(std::vector<CoxDriverParams> drivers) {
  for (const auto& d : drivers) {
    if (!(d.initial > 0.0) || !(d.long_run > 0.0))
      throw std::invalid_argument("NoiseModel: Cox driver levels must be positive");
    if (d.mean_reversion < 0.0 || d.vol < 0.0)
      throw std::invalid_argument("NoiseModel: Cox driver coefficients must be non-negative");
  }
  NoiseModel m;
  m.kind = NoiseKind::DoublyStochasticPoisson;
  m.drivers = std::move(drivers);
  return m;
}

std::string NoiseModel::tag() const {
  switch (kind) {
    case NoiseKind::Brownian:
      return "brownian";
    case NoiseKind::CompensatedPoisson:
      return "compensated_poisson";
    case NoiseKind::DoublyStochasticPoisson:
      return "doubly_stochastic_poisson";
  }
  return "unknown";
}

double PathEnsemble::cell_increment(int p, const Cell& c) const {
  double s = 0.0;
  for (int k = c.step_lo; k < c.step_hi; ++k)
    for (int z : c.marks) s += incr(p, k, z);
  return s;
}

double PathEnsemble::cell_compensator(int p, const Cell& c) const {
  const double dt = grid.dt();
  double s = 0.0;
  for (int k = c.step_lo; k < c.step_hi; ++k)
    for (int z : c.marks) s += lambda(p, k, z) * dt;
  return s;
}

double PathEnsemble::running_increment(int p, int k, int z) const {
  double s = 0.0;
  for (int j = 0; j < k; ++j) s += incr(p, j, z);
  return s;
}

double PathEnsemble::running_count(int p, int k, int z) const {
  double s = 0.0;
  for (int j = 0; j < k; ++j) s += count(p, j, z);
  return s;
}

PathEnsemble sample_ensemble(const NoiseModel& model, const TimeGrid& grid, const MarkSpace& marks,
                             int n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw std::invalid_argument("sample_ensemble: need n_paths >= 1");
  const int M = marks.size();
  if (model.kind == NoiseKind::Brownian && M != 1)
    throw std::invalid_argument("sample_ensemble: Brownian noise requires a singleton mark space");
  if (model.kind == NoiseKind::CompensatedPoisson &&
      static_cast<int>(model.intensities.size()) != M)
    throw std::invalid_argument("sample_ensemble: one intensity per mark required");
  if (model.kind == NoiseKind::DoublyStochasticPoisson &&
      static_cast<int>(model.drivers.size()) != M)
    throw std::invalid_argument("sample_ensemble: one driver per mark required");

  PathEnsemble ens;
  ens.grid = grid;
  ens.marks = marks;
  ens.n_paths = n_paths;
  ens.seed = seed;
  ens.model_tag = model.tag();
  ens.has_counts = model.counting();

  const int K = grid.n_steps;
  const double dt = grid.dt();
  const std::size_t total = static_cast<std::size_t>(n_paths) * K * M;
  ens.increments.resize(total);
  ens.intensity.resize(total);
  if (ens.has_counts) ens.counts.resize(total);

  const double sqrt_dt = std::sqrt(dt);

  parallel_for(n_paths, [&](int lo, int hi) {
    std::vector<double> lam(M);
    for (int p = lo; p < hi; ++p) {
      if (model.kind == NoiseKind::DoublyStochasticPoisson)
        for (int z = 0; z < M; ++z) lam[z] = model.drivers[z].initial;
      for (int k = 0; k < K; ++k) {
        for (int z = 0; z < M; ++z) {
          const std::size_t i = ens.idx(p, k, z);
          switch (model.kind) {
            case NoiseKind::Brownian: {
              rng::Substream s(seed, rng::StreamTag::Jumps, p, k, z);
              ens.intensity[i] = 1.0;
              ens.increments[i] = sqrt_dt * s.next_gaussian();
              break;
            }
            case NoiseKind::CompensatedPoisson: {
              rng::Substream s(seed, rng::StreamTag::Jumps, p, k, z);
              const double l = model.intensities[z];
              const double comp = l * dt;
              const double c = static_cast<double>(s.next_poisson(comp));
              ens.intensity[i] = l;
              ens.counts[i] = c;
              ens.increments[i] = c - comp;
              break;
            }
            case NoiseKind::DoublyStochasticPoisson: {
              rng::Substream s(seed, rng::StreamTag::Jumps, p, k, z);
              const double l = lam[z];
              const double comp = l * dt;
              const double c = static_cast<double>(s.next_poisson(comp));
              ens.intensity[i] = l;
              ens.counts[i] = c;
              ens.increments[i] = c - comp;
              // Advance the driver; its value at t_{k+1} only uses draws up to step k.
              const auto& d = model.drivers[z];
              rng::Substream ds(seed, rng::StreamTag::Driver, p, k, z);
              double next = l + d.mean_reversion * (d.long_run - l) * dt +
                            d.vol * std::sqrt(l * dt) * ds.next_gaussian();
              lam[z] = next > kIntensityFloor ? next : kIntensityFloor;
              break;
            }
          }
        }
      }
    }
  });
  return ens;
}

std::vector<double> stochastic_integral(const PathEnsemble& ens,
                                        std::span<const double> integrand) {
  const std::size_t len = static_cast<std::size_t>(ens.grid.n_steps) * ens.marks.size();
  if (integrand.size() != len * ens.n_paths)
    throw std::invalid_argument("stochastic_integral: integrand size mismatch");
  std::vector<double> out(ens.n_paths);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p)
      out[p] = simd::dot(integrand.subspan(static_cast<std::size_t>(p) * len, len),
                         ens.path_increments(p));
  });
  return out;
}

std::vector<double> stochastic_integral(const PathEnsemble& ens,
                                        const std::function<double(int, int, int)>& integrand) {
  const int K = ens.grid.n_steps;
  const int M = ens.marks.size();
  std::vector<double> out(ens.n_paths);
  parallel_for(ens.n_paths, [&](int lo, int hi) {
    std::vector<double> buf(static_cast<std::size_t>(K) * M);
    for (int p = lo; p < hi; ++p) {
      for (int k = 0; k < K; ++k)
        for (int z = 0; z < M; ++z) buf[static_cast<std::size_t>(k) * M + z] = integrand(p, k, z);
      out[p] = simd::dot(buf, ens.path_increments(p));
    }
  });
  return out;
}

std::vector<double> external_gaussians(std::uint64_t seed, int n_paths) {
  std::vector<double> out(n_paths);
  parallel_for(n_paths, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) {
      rng::Substream s(seed, rng::StreamTag::External, p, 0, 0);
      out[p] = s.next_gaussian();
    }
  });
  return out;
}

double FieldCheckReport::fraction_mean_within(double z) const {
  if (cells.empty()) return 1.0;
  int ok = 0;
  for (const auto& c : cells)
    if (std::abs(c.z) <= z) ++ok;
  return static_cast<double>(ok) / cells.size();
}

double FieldCheckReport::fraction_pairs_within(double z) const {
  if (pairs.empty()) return 1.0;
  int ok = 0;
  for (const auto& p : pairs)
    if (std::abs(p.z) <= z) ++ok;
  return static_cast<double>(ok) / pairs.size();
}

PairCheck orthogonality_pair(const PathEnsemble& ens, const Cell& a, const Cell& b) {
  if (!a.disjoint(b))
    throw std::invalid_argument("orthogonality_pair: cells overlap");
  std::vector<double> prod(ens.n_paths);
  for (int p = 0; p < ens.n_paths; ++p)
    prod[p] = ens.cell_increment(p, a) * ens.cell_increment(p, b);
  PairCheck pc;
  const auto ms = stats::mean_se(prod);
  pc.mean = ms.value;
  pc.se = ms.se;
  pc.z = stats::z_score(ms);
  return pc;
}

FieldCheckReport field_property_suite(const PathEnsemble& ens, const std::vector<Cell>& cells) {
  FieldCheckReport rep;
  const int n = ens.n_paths;
  std::vector<std::vector<double>> mu(cells.size());

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    std::vector<double> vals(n), iso(n);
    double add_resid = 0.0;
    for (int p = 0; p < n; ++p) {
      const double m = ens.cell_increment(p, cell);
      vals[p] = m;
      iso[p] = m * m - ens.cell_compensator(p, cell);
      if (cell.step_hi - cell.step_lo >= 2) {
        const int mid = cell.step_lo + (cell.step_hi - cell.step_lo) / 2;
        const Cell left(cell.step_lo, mid, cell.marks);
        const Cell right(mid, cell.step_hi, cell.marks);
        const double r = m - ens.cell_increment(p, left) - ens.cell_increment(p, right);
        if (std::abs(r) > add_resid) add_resid = std::abs(r);
      }
    }
    CellCheck chk;
    chk.cell = cell;
    const auto ms = stats::mean_se(vals);
    chk.mean = ms.value;
    chk.se = ms.se;
    chk.z = stats::z_score(ms);
    const auto is = stats::mean_se(iso);
    chk.iso_gap = is.value;
    chk.iso_se = is.se;
    chk.iso_z = stats::z_score(is);
    chk.additivity_residual = add_resid;
    rep.max_abs_mean_z = std::max(rep.max_abs_mean_z, std::abs(chk.z));
    rep.max_abs_iso_z = std::max(rep.max_abs_iso_z, std::abs(chk.iso_z));
    rep.max_additivity_residual = std::max(rep.max_additivity_residual, add_resid);
    rep.cells.push_back(std::move(chk));
    mu[c] = std::move(vals);
  }

  for (std::size_t a = 0; a < cells.size(); ++a) {
    for (std::size_t b = a + 1; b < cells.size(); ++b) {
      if (!cells[a].disjoint(cells[b])) continue;
      std::vector<double> prod(n);
      for (int p = 0; p < n; ++p) prod[p] = mu[a][p] * mu[b][p];
      PairCheck pc;
      pc.cell_a = static_cast<int>(a);
      pc.cell_b = static_cast<int>(b);
      const auto ms = stats::mean_se(prod);
      pc.mean = ms.value;
      pc.se = ms.se;
      pc.z = stats::z_score(ms);
      rep.max_abs_pair_z = std::max(rep.max_abs_pair_z, std::abs(pc.z));
      rep.pairs.push_back(pc);
    }
  }
  return rep;
}

}  // namespace stomax
