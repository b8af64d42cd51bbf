#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfk/error.hpp"
#include "mfk/fpe.hpp"

using namespace mfk;

namespace {

double moment(const DensityField& rho, int pu, int pv) {
  double s = 0.0;
  for (std::size_t i = 0; i < rho.grid.n_u; ++i)
    for (std::size_t j = 0; j < rho.grid.n_v; ++j)
      s += rho.at(i, j) * std::pow(rho.grid.u_center(i), pu) * std::pow(rho.grid.v_center(j), pv);
  return s;
}

}  // namespace

TEST_CASE("gaussian cell masses") {
  const PhaseGrid g{2.0, 4.0, 80, 80};
  const auto rho = gaussian_density(g, {0.3, -0.5}, {0.09, 0.05, 0.64});
  CHECK(rho.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(moment(rho, 1, 0) == doctest::Approx(0.3).epsilon(1e-3));
  CHECK(moment(rho, 0, 1) == doctest::Approx(-0.5).epsilon(1e-3));
  CHECK(moment(rho, 2, 0) - 0.09 == doctest::Approx(0.09).epsilon(1e-2));
  CHECK(moment(rho, 1, 1) - 0.3 * -0.5 == doctest::Approx(0.05).epsilon(2e-2));
  CHECK(rho.mean_u() == doctest::Approx(moment(rho, 1, 0)));
  CHECK(rho.v_moment() == doctest::Approx(1.0 + moment(rho, 2, 0) + moment(rho, 0, 2)));
  CHECK(marginal_u(rho).total_mass() == doctest::Approx(1.0));
  CHECK(marginal_v(rho).mean() == doctest::Approx(moment(rho, 0, 1)).epsilon(1e-12));
  CHECK_THROWS_AS((PhaseGrid{1.0, 1.0, 1, 8}.validate()), InvalidArgument);
}

TEST_CASE("mass is conserved per step and the stationary Gaussian is preserved") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  const double stiff = model.basis.eigenvalue(0) + 0.6;
  const PhaseGrid g{1.2, 4.5, 96, 96};
  const auto stat = gaussian_density(g, {0.0, 0.0}, {1.0 / (2.0 * stiff), 0.0, 0.5});
  FpeConfig cfg;
  cfg.dt = 2e-3;
  const auto trace = fpe_run(stat, model, cfg, 0.4);
  REQUIRE(trace.diagnostics.size() == 201);
  for (const auto& d : trace.diagnostics) {
    CHECK(d.mass_defect <= 1e-12);
    CHECK(d.mass == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(trace.snapshots.size() == 2);
  CHECK(trace.snapshots.back().time == doctest::Approx(0.4));
  CHECK(l1_distance(trace.snapshots.back(), stat) < 0.03);
  for (double m : trace.snapshots.back().mass) CHECK(m >= 0.0);
}

TEST_CASE("free transport moves the u-mean by the v-mean") {
  ModelSpec model;
  model.basis = GalerkinBasis(1.0, 1, true);
  model.gamma = 0.0;
  model.sigma = Sigma{SigmaKind::constant, 0.0, 0.0};
  const PhaseGrid g{2.0, 2.0, 100, 50};
  const auto rho0 = gaussian_density(g, {-0.5, 0.6}, {0.02, 0.0, 0.01});
  for (Limiter limiter : {Limiter::none, Limiter::van_leer}) {
    FpeConfig cfg;
    cfg.dt = 0.01;
    cfg.limiter = limiter;
    FpeStepInfo info;
    DensityField rho = rho0;
    for (int s = 0; s < 50; ++s) rho = fpe_step(rho, model, cfg, &info);
    CHECK(info.picard_iterations <= 1);
    // Upwind fluxes telescope exactly; limited slopes do not.
    const double tol = limiter == Limiter::none ? 1e-9 : 2e-3;
    CHECK(rho.mean_u() - rho0.mean_u() == doctest::Approx(0.5 * moment(rho0, 0, 1)).epsilon(tol));
    CHECK(moment(rho, 0, 1) == doctest::Approx(moment(rho0, 0, 1)).epsilon(1e-12));
  }
}

TEST_CASE("interacting model iterates Picard to tolerance") {
  const ModelSpec model = make_saturated_model(GalerkinBasis(1.0, 1), 0.8, 0.5, 1.0, 0.5, 0.5);
  const PhaseGrid g{1.5, 3.0, 48, 48};
  const auto rho0 = gaussian_density(g, {0.3, 0.0}, {0.05, 0.0, 0.2});
  FpeConfig cfg;
  cfg.dt = 5e-3;
  FpeStepInfo info;
  const auto rho = fpe_step(rho0, model, cfg, &info);
  CHECK(info.picard_iterations >= 1);
  CHECK(info.picard_residual <= cfg.picard_tol);
  CHECK(rho.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  const auto f = fpe_force(rho0, model);
  CHECK(f.size() == g.n_u);
  CHECK(f[0] > 0.0);  // left of the bulk both the kernel and the potential push right
}

TEST_CASE("negative densities are rejected") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  const PhaseGrid g{1.2, 4.5, 32, 32};
  auto rho = gaussian_density(g, {0.0, 0.0}, {0.05, 0.0, 0.5});
  rho.at(16, 16) = -0.5;
  FpeConfig cfg;
  CHECK_THROWS_AS(fpe_step(rho, model, cfg), NumericalFailure);
  FpeConfig bad;
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
