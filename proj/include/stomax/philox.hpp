#pragma once

#include <array>
#include <cstdint>

namespace stomax::rng {

// Philox 4x32-10 counter-based generator (Salmon et al., SC 2011).
// Every (path, step, mark, purpose) tuple owns an independent substream, so
// draws are reproducible regardless of evaluation order or thread count.

struct Philox4x32 {
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key);
};

// Purpose tag keeps jump draws, intensity-driver draws and auxiliary draws
// in disjoint substreams.
enum class StreamTag : std::uint32_t { Jumps = 1, Driver = 2, External = 3 };

class Substream {
 public:
  Substream(std::uint64_t seed, StreamTag tag, std::uint32_t path, std::uint32_t step,
            std::uint32_t mark);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0,1), 53-bit resolution.
  double next_unit();
  /// Standard normal via Box-Muller (cosine branch).
  double next_gaussian();
  /// Poisson draw by CDF inversion; large means split by additivity.
  std::uint64_t next_poisson(double mean);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int avail_ = 0;  // 32-bit words left in buf_
};

}  // namespace stomax::rng
