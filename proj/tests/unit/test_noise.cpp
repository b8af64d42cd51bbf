#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfk/noise.hpp"

using namespace mfk;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("normal draws are reproducible and standard") {
  const NoiseDriver a(17, NoiseDomain::dynamics);
  const NoiseDriver b(17, NoiseDomain::dynamics);
  const NoiseDriver c(17, NoiseDomain::initial_state);
  CHECK(a.normal(3, 1, 99) == b.normal(3, 1, 99));
  CHECK(a.normal(3, 1, 99) != c.normal(3, 1, 99));
  CHECK(a.normal(3, 1, 99) != a.normal(3, 1, 100));

  const std::size_t n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.normal(i, 0, 0);
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  CHECK(std::abs(s / n) < 5.0 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("uniform draws lie in the open unit interval") {
  const NoiseDriver a(5, NoiseDomain::bootstrap);
  double s = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = a.uniform(i, 2, 7);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(std::abs(s / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
}
