#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mfk/error.hpp"
#include "mfk/galerkin.hpp"
#include "mfk/linalg.hpp"
#include "oracles.hpp"

using namespace mfk;
using std::numbers::pi;

TEST_CASE("sine basis eigenvalues") {
  const GalerkinBasis b(2.0, 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(b.eigenvalue(k) == doctest::Approx(std::pow((k + 1) * pi / 2.0, 2)));
  CHECK(b.lambda_max() == doctest::Approx(4.0 * pi * pi));
  const GalerkinBasis free(2.0, 3, true);
  for (double l : free.eigenvalues()) CHECK(l == 0.0);
  CHECK_THROWS_AS(GalerkinBasis(0.0, 2), InvalidArgument);
  CHECK_THROWS_AS(GalerkinBasis(1.0, 0), InvalidArgument);
}

TEST_CASE("laplacian, projection and physical evaluation") {
  const GalerkinBasis b(1.0, 3);
  const FieldCoeffs u{1.0, -2.0, 0.5};
  const auto lu = laplacian_apply(u, b);
  for (std::size_t k = 0; k < 3; ++k) CHECK(lu[k] == doctest::Approx(-b.eigenvalue(k) * u[k]));
  CHECK(project(u, 2) == FieldCoeffs{1.0, -2.0});
  CHECK_THROWS_AS(project(u, 4), InvalidArgument);
  CHECK_THROWS_AS(laplacian_apply(FieldCoeffs{1.0}, b), InvalidArgument);

  const double x = 0.3;
  double direct = 0.0;
  for (std::size_t k = 0; k < 3; ++k) direct += u[k] * std::sqrt(2.0) * std::sin((k + 1) * pi * x);
  CHECK(eval_physical(u, x, 1.0) == doctest::Approx(direct).epsilon(1e-14));
  CHECK(eval_physical(u, 0.0, 1.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(eval_physical(u, 1.5, 1.0), InvalidArgument);
}

TEST_CASE("2x2 exponential matches the eigen-decomposition oracle") {
  const Mat2 cases[] = {{0, 1, -10, -1}, {0, 1, -0.1, -3}, {0, 1, -1, -2}, {0.5, 2, -0.3, 0.1}, {0, 0, 0, 0}};
  for (const auto& m : cases) {
    const Mat2 e = expm2(m);
    const auto ref = oracle::expm2_eigen(m);
    for (int j = 0; j < 4; ++j) CHECK(e[j] == doctest::Approx(ref[j]).epsilon(1e-11));
    // det exp(M) = exp(tr M)
    CHECK(e[0] * e[3] - e[1] * e[2] == doctest::Approx(std::exp(m[0] + m[3])).epsilon(1e-12));
  }
}

TEST_CASE("kinetic propagator solves the damped oscillator") {
  const double lam = 9.0, gamma = 0.5, eps = 2.0, dt = 0.05;
  const Mat2 p = kinetic_propagator(lam, gamma, eps, dt);
  const auto ref = oracle::expm2_eigen({0, dt, -dt * lam / eps, -dt * gamma / eps});
  for (int j = 0; j < 4; ++j) CHECK(p[j] == doctest::Approx(ref[j]).epsilon(1e-12));
  // semigroup: P(dt) P(dt) = P(2 dt)
  const Mat2 pp = mat2_mul(p, p);
  const Mat2 p2 = kinetic_propagator(lam, gamma, eps, 2 * dt);
  for (int j = 0; j < 4; ++j) CHECK(pp[j] == doctest::Approx(p2[j]).epsilon(1e-12));
  // free transport
  const Mat2 f = kinetic_propagator(0.0, 0.0, 1.0, 0.3);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == doctest::Approx(0.3));
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 1.0);
}
