#include "stomax/simd.hpp"

#include <atomic>
#include <stdexcept>

namespace stomax::simd {
namespace {

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::Scalar};

bool detect_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && detail::avx2_table.sum != nullptr;
#else
  return false;
#endif
}

const KernelTable* select_default() {
  if (detect_avx2()) {
    g_backend.store(Backend::Avx2);
    return &detail::avx2_table;
  }
  g_backend.store(Backend::Scalar);
  return &detail::scalar_table;
}

}  // namespace

bool cpu_has_avx2() { return detect_avx2(); }

const KernelTable& kernels() {
  const KernelTable* t = g_table.load(std::memory_order_acquire);
  if (!t) {
    t = select_default();
    g_table.store(t, std::memory_order_release);
  }
  return *t;
}

Backend active_backend() {
  kernels();
  return g_backend.load();
}

const char* backend_name() {
  return active_backend() == Backend::Avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
  if (b == Backend::Avx2) {
    if (!detect_avx2()) throw std::runtime_error("simd: AVX2 not available on this CPU");
    g_table.store(&detail::avx2_table);
  } else {
    g_table.store(&detail::scalar_table);
  }
  g_backend.store(b);
}

}  // namespace stomax::simd
