#include "stomax/philox.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stomax::rng {
namespace {

constexpr std::uint32_t kW32A = 0x9E3779B9u;
constexpr std::uint32_t kW32B = 0xBB67AE85u;
constexpr std::uint32_t kM4x32A = 0xD2511F53u;
constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(prod);
  hi = static_cast<std::uint32_t>(prod >> 32);
}

inline void one_round(std::array<std::uint32_t, 4>& c, std::array<std::uint32_t, 2>& k) {
  std::uint32_t lo0, hi0, lo1, hi1;
  mul_hi_lo(kM4x32A, c[0], lo0, hi0);
  mul_hi_lo(kM4x32B, c[2], lo1, hi1);
  const std::array<std::uint32_t, 4> out{hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  c = out;
  k[0] += kW32A;
  k[1] += kW32B;
}

}  // namespace

std::array<std::uint32_t, 4> Philox4x32::block(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) one_round(ctr, key);
  return ctr;
}

Substream::Substream(std::uint64_t seed, StreamTag tag, std::uint32_t path, std::uint32_t step,
                     std::uint32_t mark) {
  key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  ctr_ = {0u, (static_cast<std::uint32_t>(tag) << 24) | (mark & 0x00FFFFFFu), step, path};
}

void Substream::refill() {
  buf_ = Philox4x32::block(ctr_, key_);
  ++ctr_[0];
  avail_ = 4;
}

std::uint64_t Substream::next_u64() {
  if (avail_ < 2) refill();
  const std::uint32_t lo = buf_[4 - avail_];
  const std::uint32_t hi = buf_[4 - avail_ + 1];
  avail_ -= 2;
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

double Substream::next_unit() {
  // (x >> 11) has 53 random bits; the half-ulp offset keeps the value in (0,1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double Substream::next_gaussian() {
  const double u1 = next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Substream::next_poisson(double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson: negative mean");
  if (mean == 0.0) return 0;
  if (mean > 30.0) {
    // Additivity: split into pieces with mean <= 30 each.
    const auto pieces = static_cast<std::uint64_t>(std::ceil(mean / 30.0));
    const double part = mean / static_cast<double>(pieces);
    std::uint64_t total = 0;
    for (std::uint64_t j = 0; j < pieces; ++j) total += next_poisson(part);
    return total;
  }
  const double u = next_unit();
  double p = std::exp(-mean);
  double cdf = p;
  std::uint64_t k = 0;
  const auto cap = static_cast<std::uint64_t>(mean + 40.0 * std::sqrt(mean) + 50.0);
  while (u > cdf && k < cap) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

}  // namespace stomax::rng
