#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfk/test_functions.hpp"

using namespace mfk;

TEST_CASE("bump derivatives match finite differences") {
  const TestFunction phi = make_bump({0.1, -0.3, 0.2, 0.0}, 1.2, 2.0, {0.4, 0.1, -0.5, 0.2}, 0.7);
  const std::vector<double> r{0.3, -0.1, 0.5, 0.4};
  const std::size_t d = 4;
  std::vector<double> g(d), hess(d * d);
  phi.gradient(r, g);
  phi.hessian(r, hess);
  const double h = 1e-5;
  for (std::size_t i = 0; i < d; ++i) {
    auto rp = r, rm = r;
    rp[i] += h;
    rm[i] -= h;
    CHECK(g[i] == doctest::Approx((phi.value(rp) - phi.value(rm)) / (2 * h)).epsilon(1e-6));
    std::vector<double> gp(d), gm(d);
    phi.gradient(rp, gp);
    phi.gradient(rm, gm);
    for (std::size_t j = 0; j < d; ++j)
      CHECK(hess[i * d + j] == doctest::Approx((gp[j] - gm[j]) / (2 * h)).epsilon(1e-5).scale(1.0));
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(hess[i * d + j] == doctest::Approx(hess[j * d + i]));
}

TEST_CASE("bump support and peak") {
  const TestFunction phi = make_bump({0.0, 0.0}, 0.5);
  CHECK(phi.value(std::vector<double>{0.0, 0.0}) == doctest::Approx(1.0));
  CHECK(phi.value(std::vector<double>{0.5, 0.0}) == 0.0);
  CHECK(phi.value(std::vector<double>{0.3, 0.4}) == 0.0);
  CHECK(phi.value(std::vector<double>{0.2, 0.2}) > 0.0);
  CHECK(phi.support_radius == 0.5);
  const auto n = sup_norms(phi);
  CHECK(n.value == doctest::Approx(1.0));
  CHECK(n.gradient > 0.0);
}

TEST_CASE("unit-Lipschitz bump and energy") {
  const TestFunction psi = make_unit_lipschitz_bump({0.2, -0.1}, 0.8);
  const auto n = sup_norms(psi);
  CHECK(n.gradient == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sup_gradient_energy(psi, 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  // with kappa, the energy is at least kappa max|psi|^2 and at most 1 + kappa max|psi|^2
  const double e = sup_gradient_energy(psi, 4.0);
  CHECK(e >= 4.0 * n.value * n.value - 1e-12);
  CHECK(e <= 1.0 + 4.0 * n.value * n.value + 1e-12);
}

TEST_CASE("constants and sums") {
  const TestFunction c = make_constant(2, 3.5);
  std::vector<double> g(4, 1.0);
  c.gradient(std::vector<double>{1, 2, 3, 4}, g);
  CHECK(c.value(std::vector<double>{1, 2, 3, 4}) == 3.5);
  for (double x : g) CHECK(x == 0.0);
  const TestFunction s = add(c, make_bump({0, 0, 0, 0}, 1.0));
  CHECK(s.value(std::vector<double>{0, 0, 0, 0}) == doctest::Approx(4.5));
}
