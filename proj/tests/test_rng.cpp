#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "stomax/philox.hpp"

using namespace stomax;

TEST_CASE("substreams are deterministic and order-independent", "[rng]") {
  rng::Substream a(42, rng::StreamTag::Jumps, 3, 7, 1);
  rng::Substream b(42, rng::StreamTag::Jumps, 3, 7, 1);
  for (int i = 0; i < 16; ++i) REQUIRE(a.next_u64() == b.next_u64());

  // Different coordinates decorrelate immediately.
  rng::Substream c(42, rng::StreamTag::Jumps, 3, 7, 2);
  rng::Substream d(42, rng::StreamTag::Driver, 3, 7, 1);
  rng::Substream e(43, rng::StreamTag::Jumps, 3, 7, 1);
  rng::Substream base(42, rng::StreamTag::Jumps, 3, 7, 1);
  const auto x = base.next_u64();
  REQUIRE(x != c.next_u64());
  REQUIRE(x != d.next_u64());
  REQUIRE(x != e.next_u64());
}

TEST_CASE("uniforms stay inside the open unit interval", "[rng]") {
  rng::Substream s(7, rng::StreamTag::Jumps, 0, 0, 0);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.next_unit();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("gaussian moments", "[rng]") {
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int p = 0; p < n; ++p) {
    rng::Substream s(99, rng::StreamTag::Jumps, p, 0, 0);
    const double g = s.next_gaussian();
    sum += g;
    sum2 += g * g;
    sum4 += g * g * g * g;
  }
  const double mean = sum / n;
  const double var = sum2 / n;
  const double kurt = sum4 / n;
  REQUIRE(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(var == Catch::Approx(1.0).margin(0.02));
  REQUIRE(kurt == Catch::Approx(3.0).margin(0.15));
}

TEST_CASE("poisson moments across mean regimes", "[rng]") {
  for (double mean : {0.02, 1.5, 12.0, 75.0}) {
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int p = 0; p < n; ++p) {
      rng::Substream st(123, rng::StreamTag::Jumps, p, 1, 0);
      const auto k = static_cast<double>(st.next_poisson(mean));
      s += k;
      s2 += k * k;
    }
    const double m = s / n;
    const double var = s2 / n - m * m;
    const double se_mean = std::sqrt(mean / n);
    REQUIRE(std::abs(m - mean) < 5.0 * se_mean);
    REQUIRE(var == Catch::Approx(mean).epsilon(0.05));
  }
}

TEST_CASE("poisson rejects negative means", "[rng]") {
  rng::Substream s(1, rng::StreamTag::Jumps, 0, 0, 0);
  REQUIRE_THROWS_AS(s.next_poisson(-1.0), std::invalid_argument);
}
