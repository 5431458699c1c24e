#include "stomax/simd.hpp"

#include "stomax/detail/reduce_dag.hpp"

namespace stomax::simd {
namespace {

// 4 virtual lanes; mirrors the AVX2 data flow operation for operation.
struct ScalarOps {
  struct Vec {
    double v[4];
  };
  using LeafArg = std::size_t;

  static Vec load(const double* p) { return Vec{{p[0], p[1], p[2], p[3]}}; }
  Vec add(const Vec& a, const Vec& b) const {
    return Vec{{a.v[0] + b.v[0], a.v[1] + b.v[1], a.v[2] + b.v[2], a.v[3] + b.v[3]}};
  }
  static Vec mul(const Vec& a, const Vec& b) {
    return Vec{{a.v[0] * b.v[0], a.v[1] * b.v[1], a.v[2] * b.v[2], a.v[3] * b.v[3]}};
  }
  void store(double* out, const Vec& a) const {
    out[0] = a.v[0];
    out[1] = a.v[1];
    out[2] = a.v[2];
    out[3] = a.v[3];
  }
};

double sum_scalar(const double* x, std::size_t n) {
  ScalarOps ops;
  return detail::reduce_dag(
      ops, [&](std::size_t i) { return ScalarOps::load(x + i); },
      [&](std::size_t i) { return x[i]; }, n);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  ScalarOps ops;
  return detail::reduce_dag(
      ops,
      [&](std::size_t i) { return ScalarOps::mul(ScalarOps::load(a + i), ScalarOps::load(b + i)); },
      [&](std::size_t i) { return a[i] * b[i]; }, n);
}

double dot3_scalar(const double* a, const double* b, const double* c, std::size_t n) {
  ScalarOps ops;
  return detail::reduce_dag(
      ops,
      [&](std::size_t i) {
        return ScalarOps::mul(ScalarOps::mul(ScalarOps::load(a + i), ScalarOps::load(b + i)),
                              ScalarOps::load(c + i));
      },
      [&](std::size_t i) { return (a[i] * b[i]) * c[i]; }, n);
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace

namespace detail {
const KernelTable scalar_table{sum_scalar, dot_scalar, dot3_scalar, axpy_scalar};
}

}  // namespace stomax::simd
