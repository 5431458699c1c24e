#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace stomax::simd {

enum class Backend { Scalar, Avx2 };

/// Kernel entry points. Both backends realize the same reduction tree
/// (4-wide lanes, pairwise block combining, pairwise horizontal fold),
/// so their results are bit-identical; the only difference is speed.
struct KernelTable {
  double (*sum)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*dot3)(const double*, const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

/// Active kernel table (selected once at startup, AVX2 when available).
const KernelTable& kernels();

Backend active_backend();
const char* backend_name();

/// Force a backend (tests; selecting Avx2 on a CPU without it throws).
void force_backend(Backend b);
bool cpu_has_avx2();

inline double sum(std::span<const double> x) { return kernels().sum(x.data(), x.size()); }
inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}
inline double dot3(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  return kernels().dot3(a.data(), b.data(), c.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

namespace detail {
extern const KernelTable scalar_table;
extern const KernelTable avx2_table;  // entries null when not compiled for x86-64
}

}  // namespace stomax::simd
