#include "stomax/regression.hpp"

#include <cmath>
#include <stdexcept>

#include "stomax/simd.hpp"

namespace stomax {

DesignBuilder::DesignBuilder(const BasisSpec& spec, const FeatureContext& ctx)
    : spec_(spec), ctx_(ctx) {
  if (!ctx.ens) throw std::invalid_argument("DesignBuilder: ensemble required");
  n_paths_ = ctx.ens->n_paths;
  const int M = ctx.ens->marks.size();

  for (const auto& fs : spec.vars) {
    const bool per_mark = fs.kind == FeatureKind::RunningNoise ||
                          fs.kind == FeatureKind::RunningCount ||
                          fs.kind == FeatureKind::Intensity || fs.kind == FeatureKind::Alive;
    if ((fs.kind == FeatureKind::State || fs.kind == FeatureKind::InverseState) && !ctx.states)
      throw std::invalid_argument("DesignBuilder: state feature without state paths");
    if ((fs.kind == FeatureKind::RunningCount || fs.kind == FeatureKind::Alive) &&
        !ctx.ens->has_counts)
      throw std::invalid_argument("DesignBuilder: count feature on a continuous model");
    if (per_mark && fs.mark < 0) {
      for (int z = 0; z < M; ++z) vars_.push_back({fs.kind, z});
    } else {
      vars_.push_back({fs.kind, fs.mark < 0 ? 0 : fs.mark});
    }
  }

  auto var_name = [](const Var& v) {
    std::string base;
    switch (v.kind) {
      case FeatureKind::State: base = "x"; break;
      case FeatureKind::InverseState: base = "inv_x"; break;
      case FeatureKind::RunningNoise: base = "m"; break;
      case FeatureKind::RunningCount: base = "h"; break;
      case FeatureKind::Intensity: base = "lam"; break;
      case FeatureKind::Alive: base = "alive"; break;
    }
    return base + "[" + std::to_string(v.mark) + "]";
  };

  names_.push_back("1");
  if (spec.degree >= 1)
    for (const auto& v : vars_) names_.push_back(var_name(v));
  if (spec.degree >= 2)
    for (std::size_t i = 0; i < vars_.size(); ++i)
      for (std::size_t j = i; j < vars_.size(); ++j)
        names_.push_back(var_name(vars_[i]) + "*" + var_name(vars_[j]));
  n_features_ = static_cast<int>(names_.size());

  cum_noise_.assign(static_cast<std::size_t>(n_paths_) * M, 0.0);
  if (ctx.ens->has_counts) cum_counts_.assign(static_cast<std::size_t>(n_paths_) * M, 0.0);
  design_.resize(static_cast<std::size_t>(n_paths_) * n_features_);
}

void DesignBuilder::rewind() {
  current_step_ = -1;
  cum_step_ = 0;
  std::fill(cum_noise_.begin(), cum_noise_.end(), 0.0);
  std::fill(cum_counts_.begin(), cum_counts_.end(), 0.0);
}

void DesignBuilder::advance_to(int step) {
  const auto& ens = *ctx_.ens;
  const int M = ens.marks.size();
  while (cum_step_ < step) {
    for (int p = 0; p < n_paths_; ++p)
      for (int z = 0; z < M; ++z) {
        cum_noise_[static_cast<std::size_t>(p) * M + z] += ens.incr(p, cum_step_, z);
        if (ens.has_counts)
          cum_counts_[static_cast<std::size_t>(p) * M + z] += ens.count(p, cum_step_, z);
      }
    ++cum_step_;
  }
}

const std::vector<double>& DesignBuilder::at_step(int step) {
  if (step < current_step_)
    throw std::logic_error("DesignBuilder: steps must be visited in order (rewind to restart)");
  if (step != current_step_) {
    advance_to(step);
    fill(step);
    current_step_ = step;
  }
  return design_;
}

void DesignBuilder::fill(int step) {
  const auto& ens = *ctx_.ens;
  const int M = ens.marks.size();
  const int nv = static_cast<int>(vars_.size());
  const auto n = static_cast<std::size_t>(n_paths_);

  std::vector<double> raw(static_cast<std::size_t>(nv) * n);
  for (int v = 0; v < nv; ++v) {
    const Var var = vars_[v];
    double* col = raw.data() + static_cast<std::size_t>(v) * n;
    for (int p = 0; p < n_paths_; ++p) {
      double val = 0.0;
      switch (var.kind) {
        case FeatureKind::State:
          val = ctx_.states->state(p, step);
          break;
        case FeatureKind::InverseState: {
          const double x = ctx_.states->state(p, step);
          val = x != 0.0 ? 1.0 / x : 0.0;
          break;
        }
        case FeatureKind::RunningNoise:
          val = cum_noise_[static_cast<std::size_t>(p) * M + var.mark];
          break;
        case FeatureKind::RunningCount:
          val = cum_counts_[static_cast<std::size_t>(p) * M + var.mark];
          break;
        case FeatureKind::Intensity:
          val = ens.lambda(p, step, var.mark);
          break;
        case FeatureKind::Alive:
          val = cum_counts_[static_cast<std::size_t>(p) * M + var.mark] == 0.0 ? 1.0 : 0.0;
          break;
      }
      col[p] = val;
    }
  }

  int f = 0;
  auto column = [&](int j) { return design_.data() + static_cast<std::size_t>(j) * n; };
  double* c0 = column(f++);
  for (std::size_t p = 0; p < n; ++p) c0[p] = 1.0;
  if (spec_.degree >= 1)
    for (int v = 0; v < nv; ++v) {
      double* c = column(f++);
      const double* r = raw.data() + static_cast<std::size_t>(v) * n;
      for (std::size_t p = 0; p < n; ++p) c[p] = r[p];
    }
  if (spec_.degree >= 2)
    for (int i = 0; i < nv; ++i)
      for (int j = i; j < nv; ++j) {
        double* c = column(f++);
        const double* ri = raw.data() + static_cast<std::size_t>(i) * n;
        const double* rj = raw.data() + static_cast<std::size_t>(j) * n;
        for (std::size_t p = 0; p < n; ++p) c[p] = ri[p] * rj[p];
      }
}

void CholFactor::solve_in_place(std::span<double> rhs) const {
  for (int i = 0; i < k; ++i) {
    double s = rhs[i];
    for (int j = 0; j < i; ++j) s -= chol[static_cast<std::size_t>(i) * k + j] * rhs[j];
    rhs[i] = s / chol[static_cast<std::size_t>(i) * k + i];
  }
  for (int i = k - 1; i >= 0; --i) {
    double s = rhs[i];
    for (int j = i + 1; j < k; ++j) s -= chol[static_cast<std::size_t>(j) * k + i] * rhs[j];
    rhs[i] = s / chol[static_cast<std::size_t>(i) * k + i];
  }
}

CholFactor gram_cholesky(const std::vector<double>& design, int n, int k, double ridge_rel) {
  std::vector<double> gram(static_cast<std::size_t>(k) * k);
  auto col = [&](int j) {
    return std::span<const double>(design.data() + static_cast<std::size_t>(j) * n,
                                   static_cast<std::size_t>(n));
  };
  double trace = 0.0;
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const double g = simd::dot(col(a), col(b));
      gram[static_cast<std::size_t>(a) * k + b] = g;
      gram[static_cast<std::size_t>(b) * k + a] = g;
    }
    trace += gram[static_cast<std::size_t>(a) * k + a];
  }
  const double ridge = ridge_rel > 0.0 ? ridge_rel * trace / k : 0.0;
  for (int a = 0; a < k; ++a) gram[static_cast<std::size_t>(a) * k + a] += ridge;

  CholFactor f;
  f.k = k;
  f.chol.assign(static_cast<std::size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = gram[static_cast<std::size_t>(i) * k + j];
      for (int m = 0; m < j; ++m)
        s -= f.chol[static_cast<std::size_t>(i) * k + m] *
             f.chol[static_cast<std::size_t>(j) * k + m];
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s))
          throw std::runtime_error("regression: design matrix degenerate even after ridge");
        f.chol[static_cast<std::size_t>(i) * k + j] = std::sqrt(s);
      } else {
        f.chol[static_cast<std::size_t>(i) * k + j] =
            s / f.chol[static_cast<std::size_t>(j) * k + j];
      }
    }
  }
  return f;
}

std::vector<double> design_rhs(const std::vector<double>& design, int n, int k,
                               std::span<const double> response) {
  std::vector<double> rhs(k);
  for (int j = 0; j < k; ++j)
    rhs[j] = simd::dot(std::span<const double>(design.data() + static_cast<std::size_t>(j) * n,
                                               static_cast<std::size_t>(n)),
                       response);
  return rhs;
}

std::vector<double> design_fitted(const std::vector<double>& design, int n, int k,
                                  std::span<const double> coeffs) {
  std::vector<double> fit(n, 0.0);
  for (int j = 0; j < k; ++j)
    simd::axpy(coeffs[j],
               std::span<const double>(design.data() + static_cast<std::size_t>(j) * n,
                                       static_cast<std::size_t>(n)),
               fit);
  return fit;
}

std::vector<double> ridge_fit(const std::vector<double>& design, int n, int k,
                              std::span<const double> response, double ridge_rel) {
  auto f = gram_cholesky(design, n, k, ridge_rel);
  auto rhs = design_rhs(design, n, k, response);
  f.solve_in_place(rhs);
  return rhs;
}

}  // namespace stomax
