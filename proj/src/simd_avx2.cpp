#include "stomax/simd.hpp"

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

#include "stomax/detail/reduce_dag.hpp"

namespace stomax::simd {
namespace {

struct Avx2Ops {
  using Vec = __m256d;
  Vec add(Vec a, Vec b) const { return _mm256_add_pd(a, b); }
  void store(double* out, Vec a) const { _mm256_storeu_pd(out, a); }
};

double sum_avx2(const double* x, std::size_t n) {
  Avx2Ops ops;
  return detail::reduce_dag(
      ops, [&](std::size_t i) { return _mm256_loadu_pd(x + i); },
      [&](std::size_t i) { return x[i]; }, n);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  Avx2Ops ops;
  return detail::reduce_dag(
      ops,
      [&](std::size_t i) { return _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)); },
      [&](std::size_t i) { return a[i] * b[i]; }, n);
}

double dot3_avx2(const double* a, const double* b, const double* c, std::size_t n) {
  Avx2Ops ops;
  return detail::reduce_dag(
      ops,
      [&](std::size_t i) {
        return _mm256_mul_pd(_mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)),
                             _mm256_loadu_pd(c + i));
      },
      [&](std::size_t i) { return (a[i] * b[i]) * c[i]; }, n);
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace

namespace detail {
const KernelTable avx2_table{sum_avx2, dot_avx2, dot3_avx2, axpy_avx2};
}

}  // namespace stomax::simd

#else

namespace stomax::simd::detail {
const KernelTable avx2_table{nullptr, nullptr, nullptr, nullptr};
}

#endif
