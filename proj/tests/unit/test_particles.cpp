#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "mfk/error.hpp"
#include "mfk/linalg.hpp"
#include "mfk/particles.hpp"
#include "oracles.hpp"

using namespace mfk;

namespace {

ModelSpec free_model(std::size_t m) {
  ModelSpec model;
  model.basis = GalerkinBasis(1.0, m, true);
  model.gamma = 0.0;
  model.sigma = Sigma{SigmaKind::constant, 0.0, 0.0};
  return model;
}

InitialDistribution gaussian(std::size_t m, double mu, double vu, double vv) {
  PhasePoint mean{std::vector<double>(m, mu), std::vector<double>(m, 0.0)};
  return InitialDistribution::gaussian(mean, std::vector<double>(m, vu), std::vector<double>(m, vv));
}

}  // namespace

TEST_CASE("free transport is exact: u(t) = u0 + v0 t") {
  const ModelSpec model = free_model(2);
  for (Scheme scheme : {Scheme::splitting, Scheme::euler_maruyama}) {
    Ensemble e = init_ensemble(gaussian(2, 0.0, 1.0, 1.0), 16, 2, 3);
    const Ensemble e0 = e;
    IntegratorConfig cfg;
    cfg.dt = 0.01;
    cfg.scheme = scheme;
    run(e, model, cfg, 1.0, 1, {});
    CHECK(e.time == doctest::Approx(1.0));
    CHECK(e.step_index == 100);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(e.v(i)[k] == e0.v(i)[k]);
        CHECK(e.u(i)[k] == doctest::Approx(e0.u(i)[k] + e0.v(i)[k]).epsilon(1e-12));
      }
  }
}

TEST_CASE("deterministic linear flow converges at first order") {
  // One particle: the kernel term vanishes and the mean obeys the potential alone.
  const GalerkinBasis basis(1.0, 1);
  const ModelSpec model = make_linear_model(basis, 0.4, 0.2, 1.0, 0.0);
  const double lam = basis.eigenvalue(0) + 0.2;
  const auto exact = oracle::expm2_eigen({0, 1, -lam, -1});
  const double u0 = 0.7, v0 = -0.3;
  const double ue = exact[0] * u0 + exact[1] * v0;
  auto error = [&](double dt) {
    Ensemble e = init_ensemble(InitialDistribution::point_mass({{u0}, {v0}}), 1, 1, 1);
    IntegratorConfig cfg;
    cfg.dt = dt;
    run(e, model, cfg, 1.0, 1, {});
    return std::abs(e.u(0)[0] - ue);
  };
  const double e1 = error(2e-3), e2 = error(1e-3);
  CHECK(e2 < 5e-3);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("worker count and restarts do not change trajectories") {
  const ModelSpec model = make_saturated_model(GalerkinBasis(1.0, 2), 0.6, 0.5, 1.0, 0.5, 0.5);
  const auto dist = gaussian(2, 0.2, 0.1, 0.2);
  IntegratorConfig one, many;
  one.dt = many.dt = 1e-3;
  one.workers = 1;
  many.workers = 3;
  Ensemble a = init_ensemble(dist, 200, 2, 77);
  Ensemble b = a;
  run(a, model, one, 0.05, 1, {});
  run(b, model, many, 0.05, 1, {});
  CHECK(a == b);

  Ensemble c = init_ensemble(dist, 200, 2, 77);
  run(c, model, one, 0.02, 1, {});
  Ensemble restarted = c;  // saved state carries its step counter and noise key
  run(restarted, model, one, 0.03, 1, {});
  CHECK(restarted == a);

  IntegratorConfig slow = one;
  slow.fast_path = false;
  Ensemble d = init_ensemble(dist, 200, 2, 77);
  run(d, model, slow, 0.05, 1, {});
  for (std::size_t i = 0; i < 200; ++i) CHECK(d.u(i)[0] == doctest::Approx(a.u(i)[0]).epsilon(1e-10));
}

TEST_CASE("initial laws") {
  const Ensemble p = init_ensemble(InitialDistribution::point_mass({{1.0, 2.0}, {3.0, 4.0}}), 5, 2, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(p.u(i)[1] == 2.0);
    CHECK(p.v(i)[0] == 3.0);
  }
  const std::size_t n = 20000;
  const Ensemble g = init_ensemble(gaussian(1, 0.5, 0.04, 0.25), n, 1, 2);
  std::vector<double> u(g.u_data().begin(), g.u_data().end()), v(g.v_data().begin(), g.v_data().end());
  const auto st = oracle::pair_stats(u, v);
  CHECK(std::abs(st.mean_x - 0.5) < 4 * st.se_mean_x);
  CHECK(std::abs(st.xx - 0.04) < 4 * st.se_xx);
  CHECK(std::abs(st.yy - 0.25) < 4 * st.se_yy);
  CHECK(std::abs(st.xy) < 4 * st.se_xy);

  PhasePoint mean{{0.0}, {0.0}}, off{{1.0}, {0.0}};
  const Ensemble t = init_ensemble(InitialDistribution::two_cluster(mean, off, {0.0}, {0.0}, 0.25), n, 1, 3);
  std::size_t plus = 0;
  for (std::size_t i = 0; i < n; ++i) plus += t.u(i)[0] > 0.0;
  CHECK(std::abs(double(plus) / n - 0.25) < 4 * std::sqrt(0.25 * 0.75 / n));

  CHECK_THROWS_AS(InitialDistribution::gaussian(mean, {-1.0}, {1.0}).validate(1), InvalidArgument);
  CHECK_THROWS_AS(init_ensemble(gaussian(2, 0.0, 1.0, 1.0), 4, 1, 1), InvalidArgument);
}

TEST_CASE("blow-up names the step and particle") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  Ensemble e = init_ensemble(gaussian(1, 0.0, 0.1, 0.1), 4, 1, 1);
  e.set_point(2, {{INFINITY}, {0.0}});
  IntegratorConfig cfg;
  try {
    step(e, model, cfg);
    FAIL("expected NumericalFailure");
  } catch (const NumericalFailure& err) {
    const std::string what = err.what();
    CHECK(what.find("step 1") != std::string::npos);
    CHECK(what.find("particle") != std::string::npos);
  }
}

TEST_CASE("integrator validation and step counts") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 20.0;
  CHECK_THROWS_AS(cfg.validate(model), InvalidArgument);
  cfg.dt = -1.0;
  CHECK_THROWS_AS(cfg.validate(model), InvalidArgument);
  CHECK(step_count(1.0, 1e-3) == 1000);
  CHECK(step_count(0.0, 0.1) == 0);
  CHECK_THROWS_AS(step_count(1.0, 0.3), InvalidArgument);
  CHECK(scheme_from_string(to_string(Scheme::euler_maruyama)) == Scheme::euler_maruyama);
  CHECK_THROWS_AS(scheme_from_string("rk4"), InvalidArgument);
}

TEST_CASE("snapshot count") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  const auto snaps = run(init_ensemble(gaussian(1, 0.0, 0.1, 0.1), 8, 1, 1), model, cfg, 1.0, 30);
  CHECK(snaps.size() == 100 / 30 + 1);
  CHECK(snaps[1].time == doctest::Approx(0.3));
}

TEST_CASE("synchronous coupling") {
  const ModelSpec model = make_saturated_model(GalerkinBasis(1.0, 2), 0.6, 0.5, 1.0, 0.5, 0.5);
  const auto dist = gaussian(2, 0.0, 0.1, 0.1);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  CoupledPair same = couple(init_ensemble(dist, 64, 2, 1), init_ensemble(dist, 64, 2, 1));
  for (int s = 0; s < 50; ++s) step(same, model, cfg);
  CHECK(same.a == same.b);
  CHECK(coupling_cost(same) == 0.0);

  // Distinct initial seeds: b is rebound to a's noise, so both see the same increments.
  CoupledPair pair = couple(init_ensemble(dist, 64, 2, 1), init_ensemble(dist, 64, 2, 2));
  CHECK(pair.b.noise == pair.a.noise);
  CHECK(coupling_cost(pair) > 0.0);
  CHECK_THROWS_AS(couple(init_ensemble(dist, 64, 2, 1), init_ensemble(dist, 32, 2, 1)), InvalidArgument);
}

TEST_CASE("Euler-Maruyama and splitting agree in law") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  const auto dist = gaussian(1, 0.5, 0.02, 0.1);
  const auto ref = oracle::linear_moments(model.basis.eigenvalue(0), 0.2, 0.4, 1.0, 1.0, 1.0, {0.5, 0.0, 0.02, 0.0, 0.1}, 0.5);
  for (Scheme scheme : {Scheme::splitting, Scheme::euler_maruyama}) {
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.scheme = scheme;
    Ensemble e = init_ensemble(dist, 8192, 1, 5);
    run(e, model, cfg, 0.5, 1, {});
    std::vector<double> u(e.u_data().begin(), e.u_data().end()), v(e.v_data().begin(), e.v_data().end());
    const auto st = oracle::pair_stats(u, v);
    CHECK(std::abs(st.mean_x - ref.mu) < 4 * st.se_mean_x + 0.01 * std::abs(ref.mu));
    CHECK(std::abs(st.xx - ref.uu) < 4 * st.se_xx + 0.02 * ref.uu);
    CHECK(std::abs(st.yy - ref.vv) < 4 * st.se_yy + 0.02 * ref.vv);
  }
}
