#pragma once

#include <cstddef>

// Reduction DAG shared by the scalar and SIMD backends. Leaves are 4-wide
// chunks; chunks are combined pairwise (binary-counter carry chain), the
// surviving partials are folded low-to-high, lanes are folded pairwise, and
// a <4 element tail is added last. One DAG for every backend makes results
// bit-identical across them, and for n = 2^k equal summands the tree yields
// an exact power-of-two multiple.

namespace stomax::simd::detail {

// Ops supplies: Vec, add(Vec,Vec), store(double[4], Vec).
// Leaf maps a chunk base index to a Vec of 4 summands.
// Term maps a scalar index to one summand (tail path).
template <class Ops, class Leaf, class Term>
inline double reduce_dag(const Ops& ops, Leaf leaf, Term term, std::size_t n) {
  using Vec = typename Ops::Vec;
  const std::size_t n_chunks = n / 4;
  const std::size_t rem = n % 4;

  Vec partials[64];
  std::size_t cnt = 0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    Vec v = leaf(c * 4);
    std::size_t m = cnt;
    int lvl = 0;
    while (m & 1u) {
      v = ops.add(partials[lvl], v);
      m >>= 1;
      ++lvl;
    }
    partials[lvl] = v;
    ++cnt;
  }

  double total = 0.0;
  bool have_vec = false;
  Vec acc{};
  for (int lvl = 0; lvl < 64 && (cnt >> lvl) != 0; ++lvl) {
    if ((cnt >> lvl) & 1u) {
      acc = have_vec ? ops.add(partials[lvl], acc) : partials[lvl];
      have_vec = true;
    }
  }
  if (have_vec) {
    double lane[4];
    ops.store(lane, acc);
    total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  }

  if (rem > 0) {
    const std::size_t base = n_chunks * 4;
    double t = term(base);
    if (rem == 2) {
      t = t + term(base + 1);
    } else if (rem == 3) {
      t = (t + term(base + 1)) + term(base + 2);
    }
    total = have_vec ? total + t : t;
  }
  return total;
}

}  // namespace stomax::simd::detail
