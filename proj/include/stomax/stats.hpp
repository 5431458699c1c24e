#pragma once

#include <cmath>
#include <span>

#include "stomax/simd.hpp"

namespace stomax::stats {

struct MeanSE {
  double value = 0.0;
  double se = 0.0;
};

inline double mean(std::span<const double> x) {
  return x.empty() ? 0.0 : simd::sum(x) / static_cast<double>(x.size());
}

inline MeanSE mean_se(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return {mean(x), 0.0};
  const double m = simd::sum(x) / n;
  double var = (simd::dot(x, x) - n * m * m) / (n - 1.0);
  if (var < 0.0) var = 0.0;
  return {m, std::sqrt(var / n)};
}

inline double z_score(const MeanSE& s) { return s.se > 0.0 ? s.value / s.se : 0.0; }

}  // namespace stomax::stats
