#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfk/error.hpp"
#include "mfk/model.hpp"
#include "mfk/noise.hpp"
#include "mfk/test_functions.hpp"
#include "oracles.hpp"

using namespace mfk;

namespace {

EmpiricalMeasure random_measure(std::size_t m, std::size_t n, std::uint64_t seed, double scale = 1.0) {
  const NoiseDriver rng(seed, NoiseDomain::reference);
  std::vector<double> atoms(n * m);
  for (std::size_t j = 0; j < atoms.size(); ++j) atoms[j] = scale * rng.normal(0, 0, j);
  return EmpiricalMeasure(m, atoms);
}

// Hand-written force for the built-in models.
std::vector<double> force_by_hand(const ModelSpec& model, const std::vector<double>& u, const EmpiricalMeasure& rho) {
  const std::size_t m = u.size();
  std::vector<double> f(m, 0.0);
  const bool sat = model.kernel.kind == KernelKind::tanh;
  for (std::size_t k = 0; k < m; ++k) {
    f[k] = sat ? -model.potential.strength * std::tanh(u[k]) : -model.potential.strength * u[k];
    for (std::size_t j = 0; j < rho.size(); ++j) {
      const double w = u[k] - rho.atom(j)[k];
      f[k] += rho.weight(j) * (sat ? -model.kernel.strength * std::tanh(w) : -model.kernel.strength * w);
    }
  }
  return f;
}

// L phi by finite differences of phi alone.
double generator_fd(const TestFunction& phi, const PhasePoint& z, const EmpiricalMeasure& rho, const ModelSpec& model) {
  const std::size_t m = z.modes();
  const std::size_t mb = phi.based_modes;
  const auto f = force_by_hand(model, z.u, rho);
  std::vector<double> sig(m);
  model.sigma.apply(z.u, sig);
  auto value_at = [&](const PhasePoint& p) { return phi.value(reduced_coordinates(p, mb)); };
  const double h = 1e-4;
  double out = 0.0;
  for (std::size_t k = 0; k < mb; ++k) {
    PhasePoint up = z, um = z, vp = z, vm = z;
    up.u[k] += h;
    um.u[k] -= h;
    vp.v[k] += h;
    vm.v[k] -= h;
    const double du = (value_at(up) - value_at(um)) / (2 * h);
    const double dv = (value_at(vp) - value_at(vm)) / (2 * h);
    const double dvv = (value_at(vp) - 2 * value_at(z) + value_at(vm)) / (h * h);
    const double drift_v = (-model.basis.eigenvalue(k) * z.u[k] - model.gamma * z.v[k] + f[k]) / model.epsilon;
    out += z.v[k] * du + drift_v * dv + 0.5 * sig[k] * sig[k] / (model.epsilon * model.epsilon) * dvv;
  }
  return out;
}

}  // namespace

TEST_CASE("primitives and their Lipschitz constants") {
  const Kernel lin{KernelKind::linear, 0.4};
  const Kernel th{KernelKind::tanh, 0.7};
  std::vector<double> out(2);
  lin.apply(std::vector<double>{1.0, -2.0}, out);
  CHECK(out == std::vector<double>{-0.4, 0.8});
  th.apply(std::vector<double>{0.0, 1.0}, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == doctest::Approx(-0.7 * std::tanh(1.0)));
  CHECK(lin.lipschitz() == 0.4);
  CHECK(th.lipschitz() == 0.7);
  const Sigma s{SigmaKind::tanh, 0.5, 0.4};
  s.apply(std::vector<double>{0.0, 100.0}, out);
  CHECK(out[0] == doctest::Approx(0.7));
  CHECK(out[1] == doctest::Approx(0.9));
  CHECK(s.s_min() == 0.5);
  CHECK(s.s_max() == doctest::Approx(0.9));
  CHECK(s.lipschitz() == doctest::Approx(0.2));
}

TEST_CASE("fast-path convolution agrees with direct summation") {
  const GalerkinBasis basis(1.0, 3);
  const auto rho = random_measure(3, 257, 4, 1.5);
  const std::vector<double> u{0.3, -1.2, 2.0};
  for (const ModelSpec& model : {make_linear_model(basis, 0.4, 0.2, 1.0, 1.0), make_saturated_model(basis, 0.8, 0.5, 1.0, 0.5, 0.5)}) {
    const auto fast = kernel_convolve(u, rho, model.kernel);
    const auto direct = kernel_convolve_direct(u, rho, model.kernel);
    for (std::size_t k = 0; k < 3; ++k) CHECK(fast[k] == doctest::Approx(direct[k]).epsilon(1e-12));
    std::vector<double> f(3);
    total_force(u, KernelConvolver(model.kernel, rho), model, f);
    const auto ref = force_by_hand(model, u, rho);
    for (std::size_t k = 0; k < 3; ++k) CHECK(f[k] == doctest::Approx(ref[k]).epsilon(1e-12));
  }
  // Atoms far apart drive the subtraction formula into its fallback.
  const EmpiricalMeasure far(1, {30.0, -30.0, 0.0});
  const Kernel th{KernelKind::tanh, 1.0};
  const std::vector<double> u1{29.0};
  CHECK(kernel_convolve(u1, far, th)[0] == doctest::Approx(kernel_convolve_direct(u1, far, th)[0]).epsilon(1e-12));
}

TEST_CASE("drift reports the offending term") {
  const ModelSpec model = make_linear_model(GalerkinBasis(1.0, 1), 0.4, 0.2, 1.0, 1.0);
  const EmpiricalMeasure rho(1, {0.0});
  PhasePoint z{{NAN}, {0.0}};
  CHECK_THROWS_AS(drift_full(z, rho, model), NumericalFailure);
  PhasePoint ok{{1.0}, {2.0}};
  const auto d = drift_full(ok, rho, model);
  CHECK(d.u[0] == 2.0);
  CHECK(d.v[0] == doctest::Approx(-model.basis.eigenvalue(0) * 1.0 - 2.0 - 0.2 - 0.4));
}

TEST_CASE("generator matches a finite-difference oracle") {
  const GalerkinBasis basis(1.0, 2);
  const auto rho = random_measure(2, 33, 8, 0.5);
  const TestFunction phi = make_bump({0.1, -0.2, 0.3, 0.1}, 1.5, 1.0, {0.5, -0.3, 0.2, 0.1}, 1.0);
  const ModelSpec models[] = {make_linear_model(basis, 0.4, 0.2, 1.0, 0.8, 2.0),
                              make_saturated_model(basis, 0.6, 0.5, 0.7, 0.5, 0.5, 1.0)};
  const NoiseDriver rng(9, NoiseDomain::probes);
  for (const auto& model : models) {
    for (std::uint64_t p = 0; p < 20; ++p) {
      PhasePoint z{{0.1 + 0.4 * rng.normal(p, 0, 0), -0.2 + 0.4 * rng.normal(p, 1, 0)},
                   {0.3 + 0.4 * rng.normal(p, 2, 0), 0.1 + 0.4 * rng.normal(p, 3, 0)}};
      const double exact = generator_apply(phi, z, rho, model);
      CHECK(exact == doctest::Approx(generator_fd(phi, z, rho, model)).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("Lyapunov rate and the pointwise bound") {
  const GalerkinBasis basis(1.0, 2);
  const ModelSpec model = make_saturated_model(basis, 0.6, 0.5, 1.0, 0.5, 0.5);
  const auto a = validate_assumptions(model, 500, 1);
  const auto rho = random_measure(2, 64, 10, 2.0);
  const NoiseDriver rng(10, NoiseDomain::probes);
  for (std::uint64_t p = 0; p < 200; ++p) {
    PhasePoint z{{3 * rng.normal(p, 0, 0), 3 * rng.normal(p, 1, 0)}, {3 * rng.normal(p, 2, 0), 3 * rng.normal(p, 3, 0)}};
    const double rate = lyapunov_rate(z, rho, model);
    // 2 <z, drift> + Tr(sigma^2 / eps^2)
    const auto d = drift_full(z, rho, model);
    std::vector<double> sig(2);
    model.sigma.apply(z.u, sig);
    double ref = 0.0;
    for (std::size_t k = 0; k < 2; ++k) ref += 2 * (z.u[k] * d.u[k] + z.v[k] * d.v[k]) + sig[k] * sig[k];
    CHECK(rate == doctest::Approx(ref).epsilon(1e-12));
    CHECK(rate <= lyapunov_bound(a, z, rho) + 1e-9);
  }
}

TEST_CASE("assumption validation") {
  const GalerkinBasis basis(1.0, 2);
  const auto lin = validate_assumptions(make_linear_model(basis, 0.4, 0.2, 1.0, 1.0), 500, 3);
  CHECK(lin.L_K == 0.4);
  CHECK(lin.L_psi == 0.2);
  CHECK(lin.L_sigma == 0.0);
  CHECK(lin.theta == doctest::Approx(0.5));
  CHECK(lin.alpha == doctest::Approx(0.3));
  CHECK(lin.varpi == 0.0);
  CHECK(lin.estimated_L_K <= 0.4 * 1.01);

  const auto sat = validate_assumptions(make_saturated_model(basis, 0.6, 0.5, 1.0, 0.5, 0.5, 2.0), 500, 3);
  CHECK(sat.theta == doctest::Approx(0.5 * 0.25 / 4.0));
  CHECK(sat.L_sigma == doctest::Approx(0.25));
  CHECK(sat.varpi > 0.0);
  CHECK(sat.alpha_tilde >= sat.alpha);

  ModelSpec custom = make_saturated_model(basis, 1.0, 0.5, 1.0, 0.5, 0.5);
  custom.builtin = false;
  custom.declared_L_K = 0.5;
  try {
    validate_assumptions(custom, 500, 3);
    FAIL("expected an H2 violation");
  } catch (const AssumptionViolation& e) {
    CHECK(e.hypothesis() == "H2");
  }
  custom.declared_L_K.reset();
  custom.declared_L_psi = 0.1;
  try {
    validate_assumptions(custom, 500, 3);
    FAIL("expected an H3 violation");
  } catch (const AssumptionViolation& e) {
    CHECK(e.hypothesis() == "H3");
  }
  ModelSpec degenerate = make_linear_model(basis, 0.4, 0.2, 1.0, 0.0);
  try {
    validate_assumptions(degenerate, 500, 3);
    FAIL("expected an H1 violation");
  } catch (const AssumptionViolation& e) {
    CHECK(e.hypothesis() == "H1");
  }
  CHECK_THROWS_AS(make_linear_model(basis, 0.4, 0.2, 1.0, 1.0, 0.0), InvalidArgument);
  ModelSpec bad = make_linear_model(basis, 0.4, 0.2, 1.0, 1.0);
  bad.gamma = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("linear Gaussian law matches the moment ODE") {
  const GalerkinBasis basis(1.0, 2);
  const ModelSpec model = make_linear_model(basis, 0.4, 0.2, 1.3, 0.9, 1.5);
  const PhasePoint mean0{{0.5, -0.2}, {0.1, 0.3}};
  const std::vector<double> vu{0.02, 0.05}, vv{0.1, 0.2};
  for (double t : {0.0, 0.3, 2.0}) {
    const auto law = linear_gaussian_law(model, mean0, vu, vv, t);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto ref = oracle::linear_moments(basis.eigenvalue(k), 0.2, 0.4, 1.3, 0.9, 1.5,
                                              {mean0.u[k], mean0.v[k], vu[k], 0.0, vv[k]}, t);
      CHECK(law[k].mean[0] == doctest::Approx(ref.mu).epsilon(1e-9).scale(1.0));
      CHECK(law[k].mean[1] == doctest::Approx(ref.mv).epsilon(1e-9).scale(1.0));
      CHECK(law[k].cov[0] == doctest::Approx(ref.uu).epsilon(1e-9).scale(1.0));
      CHECK(law[k].cov[1] == doctest::Approx(ref.uv).epsilon(1e-9).scale(1.0));
      CHECK(law[k].cov[2] == doctest::Approx(ref.vv).epsilon(1e-9).scale(1.0));
    }
  }
}
