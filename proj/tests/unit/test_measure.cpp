#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfk/error.hpp"
#include "mfk/measure.hpp"
#include "mfk/noise.hpp"
#include "oracles.hpp"

using namespace mfk;

namespace {

std::vector<double> draws(const NoiseDriver& rng, std::uint64_t stream, std::size_t count, double shift = 0.0) {
  std::vector<double> x(count);
  for (std::size_t j = 0; j < count; ++j) x[j] = rng.normal(stream, 0, j) + shift;
  return x;
}

}  // namespace

TEST_CASE("exact W1 equals the brute-force permutation minimum") {
  const NoiseDriver rng(1, NoiseDomain::reference);
  for (std::size_t p = 0; p < 60; ++p) {
    const std::size_t dim = 1 + p % 4;
    const std::size_t n = 1 + p % 7;
    const auto x = draws(rng, 2 * p, n * dim);
    const auto y = draws(rng, 2 * p + 1, n * dim, 0.3);
    const double w = w1_exact(EmpiricalMeasure(dim, x), EmpiricalMeasure(dim, y)).value;
    CHECK(w == doctest::Approx(oracle::brute_force_w1(x, y, dim)).epsilon(1e-12));
  }
}

TEST_CASE("exact W1 metric properties") {
  const NoiseDriver rng(2, NoiseDomain::reference);
  const std::size_t dim = 3, n = 40;
  const EmpiricalMeasure a(dim, draws(rng, 0, n * dim));
  const EmpiricalMeasure b(dim, draws(rng, 1, n * dim));
  const EmpiricalMeasure c(dim, draws(rng, 2, n * dim, 1.0));
  CHECK(w1_exact(a, a).value == 0.0);
  CHECK(w1_exact(a, b).value == doctest::Approx(w1_exact(b, a).value).epsilon(1e-12));
  CHECK(w1_exact(a, c).value <= w1_exact(a, b).value + w1_exact(b, c).value + 1e-12);

  // A rigid translation by s moves every atom by |s|, and no coupling does better.
  std::vector<double> shifted(a.atoms().begin(), a.atoms().end());
  for (std::size_t j = 0; j < n; ++j) {
    shifted[j * dim] += 0.3;
    shifted[j * dim + 2] -= 0.4;
  }
  CHECK(w1_exact(a, EmpiricalMeasure(dim, shifted)).value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact W1 rejects bad inputs") {
  const EmpiricalMeasure a(1, {0.0, 1.0});
  const EmpiricalMeasure b(1, {0.0, 1.0, 2.0});
  CHECK_THROWS_AS(w1_exact(a, b), InvalidArgument);
  CHECK_THROWS_AS(w1_exact(EmpiricalMeasure(1, {0.0, 1.0}, {0.3, 0.7}), a), InvalidArgument);
  std::vector<double> big(20, 0.0);
  CHECK_THROWS_AS(w1_exact(EmpiricalMeasure(1, big), EmpiricalMeasure(1, big), 10), InvalidArgument);
  CHECK_THROWS_AS(EmpiricalMeasure(2, {1.0, 2.0, 3.0}), InvalidArgument);
}

TEST_CASE("assignment solver on a known matrix") {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto col = solve_assignment(cost, 3);
  double total = 0;
  for (std::size_t i = 0; i < 3; ++i) total += cost[i * 3 + col[i]];
  CHECK(total == 5.0);
}

TEST_CASE("sliced W1 is a lower bound of exact W1") {
  const NoiseDriver rng(3, NoiseDomain::reference);
  for (std::size_t p = 0; p < 10; ++p) {
    const std::size_t dim = 4, n = 64;
    const EmpiricalMeasure a(dim, draws(rng, 2 * p, n * dim));
    const EmpiricalMeasure b(dim, draws(rng, 2 * p + 1, n * dim, 0.2));
    const auto s = w1_sliced(a, b, 64, 11);
    CHECK(s.method == W1Method::sliced);
    CHECK(s.value <= w1_exact(a, b).value + 1e-12);
  }
  // In one dimension the single direction is +-1 and the bound is tight.
  const EmpiricalMeasure a(1, {0.0, 1.0, 5.0});
  const EmpiricalMeasure b(1, {2.0, 0.5, 1.0});
  CHECK(w1_sliced(a, b, 4, 1).value == doctest::Approx(w1_exact(a, b).value).epsilon(1e-12));
}

TEST_CASE("w1_auto never mixes methods within its cap") {
  const EmpiricalMeasure a(1, {0.0, 1.0});
  const EmpiricalMeasure b(1, {0.5, 1.5});
  CHECK(w1_auto(a, b, 1).method == W1Method::exact_matching);
  std::vector<double> big(600, 0.0), big2(600, 1.0);
  CHECK(w1_auto(EmpiricalMeasure(1, big), EmpiricalMeasure(1, big2), 1).method == W1Method::sliced);
}

TEST_CASE("one-dimensional W1") {
  const std::vector<double> x{0.0}, wx{1.0}, y{2.5}, wy{1.0};
  CHECK(w1_1d(x, wx, y, wy) == doctest::Approx(2.5));
  const std::vector<double> x2{0.0, 1.0}, w2{0.5, 0.5}, y2{0.0, 3.0};
  CHECK(w1_1d(x2, w2, y2, w2) == doctest::Approx(1.0));

  // uniform cell [0, 1] against a point mass at its center: integral |F - G| = 1/4
  const auto cell = Distribution1D::histogram({0.0, 1.0}, {1.0});
  const auto atom = Distribution1D::atoms({0.5});
  CHECK(w1_marginal_1d(cell, atom) == doctest::Approx(0.25).epsilon(1e-12));
  // two equal cells against their midpoints: 2 * (1/2) * (1/4) * width
  const auto two = Distribution1D::histogram({0.0, 1.0, 2.0}, {0.5, 0.5});
  CHECK(w1_marginal_1d(two, Distribution1D::atoms({0.5, 1.5})) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(two.mean() == doctest::Approx(1.0));
  CHECK_THROWS_AS(w1_marginal_1d(Distribution1D::histogram({0.0, 1.0}, {0.5}), atom), InvalidArgument);
}

TEST_CASE("Lyapunov monitor flags only excess growth") {
  LyapunovMonitor ok(1.0, 1.0);
  std::vector<double> v(100, 2.0);
  ok.record(0.0, v);
  for (double& x : v) x += 0.01 * 2.0;  // rate 2 < 1 + 1 * 2
  ok.record(0.01, v);
  CHECK(ok.flags().empty());

  LyapunovMonitor bad(1.0, 1.0);
  std::vector<double> w(100, 2.0);
  bad.record(0.0, w);
  for (double& x : w) x += 0.01 * 10.0;
  bad.record(0.01, w);
  CHECK(bad.flags().size() == 1);
  CHECK(bad.worst_margin() > 0.0);

  LyapunovMonitor grid(0.0, 0.0);
  grid.record_mean(0.0, 1.0);
  grid.record_mean(1.0, 1.0);
  CHECK(grid.flags().empty());
  grid.record_mean(2.0, 1.5);
  CHECK(grid.flags().size() == 1);
}

TEST_CASE("empirical measure moments") {
  const EmpiricalMeasure a(2, {1.0, 0.0, 0.0, -3.0});
  const auto m = a.mean();
  CHECK(m[0] == doctest::Approx(0.5));
  CHECK(m[1] == doctest::Approx(-1.5));
  CHECK(a.first_moment() == doctest::Approx(2.0));
  const auto lv = lyapunov_values(a);
  CHECK(lv[0] == 2.0);
  CHECK(lv[1] == 10.0);
}
