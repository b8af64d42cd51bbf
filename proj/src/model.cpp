#include "mfk/model.hpp"

#include <algorithm>
#include <cmath>

#include "mfk/error.hpp"
#include "mfk/linalg.hpp"
#include "mfk/noise.hpp"

namespace mfk {

// ---------------------------------------------------------------------------
// Primitives

void Kernel::apply(std::span<const double> w, std::span<double> out) const {
  switch (kind) {
    case KernelKind::zero:
      std::fill(out.begin(), out.end(), 0.0);
      break;
    case KernelKind::linear:
      for (std::size_t k = 0; k < w.size(); ++k) out[k] = -strength * w[k];
      break;
    case KernelKind::tanh:
      for (std::size_t k = 0; k < w.size(); ++k) out[k] = -strength * std::tanh(w[k]);
      break;
  }
}

double Kernel::lipschitz() const noexcept { return kind == KernelKind::zero ? 0.0 : std::abs(strength); }

void Potential::apply(std::span<const double> u, std::span<double> out) const {
  switch (kind) {
    case PotentialKind::zero:
      std::fill(out.begin(), out.end(), 0.0);
      break;
    case PotentialKind::linear:
      for (std::size_t k = 0; k < u.size(); ++k) out[k] = -strength * u[k];
      break;
    case PotentialKind::tanh:
      for (std::size_t k = 0; k < u.size(); ++k) out[k] = -strength * std::tanh(u[k]);
      break;
  }
}

double Potential::lipschitz() const noexcept {
  return kind == PotentialKind::zero ? 0.0 : std::abs(strength);
}

void Sigma::apply(std::span<const double> u, std::span<double> diag) const {
  if (kind == SigmaKind::constant) {
    std::fill(diag.begin(), diag.end(), s0);
    return;
  }
  for (std::size_t k = 0; k < u.size(); ++k) diag[k] = s0 + 0.5 * s1 * (1.0 + std::tanh(u[k]));
}

void ModelSpec::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("model: gamma must be nonnegative");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("model: epsilon must be positive");
  if (!(sigma.s0 >= 0.0) || !std::isfinite(sigma.s0)) throw InvalidArgument("model: sigma0 must be nonnegative");
  if (sigma.kind == SigmaKind::tanh && !(sigma.s1 >= 0.0)) {
    throw InvalidArgument("model: sigma1 must be nonnegative");
  }
  if (!std::isfinite(kernel.strength) || !std::isfinite(potential.strength)) {
    throw InvalidArgument("model: non-finite kernel or potential strength");
  }
}

ModelSpec make_linear_model(const GalerkinBasis& basis, double kappa, double a, double gamma,
                            double sigma, double epsilon) {
  ModelSpec m;
  m.name = "linear";
  m.basis = basis;
  m.gamma = gamma;
  m.epsilon = epsilon;
  m.kernel = {KernelKind::linear, kappa};
  m.potential = {PotentialKind::linear, a};
  m.sigma = {SigmaKind::constant, sigma, 0.0};
  m.builtin = true;
  m.validate();
  return m;
}

ModelSpec make_saturated_model(const GalerkinBasis& basis, double kappa_b, double b, double gamma,
                               double s0, double s1, double epsilon) {
  ModelSpec m;
  m.name = "saturated";
  m.basis = basis;
  m.gamma = gamma;
  m.epsilon = epsilon;
  m.kernel = {KernelKind::tanh, kappa_b};
  m.potential = {PotentialKind::tanh, b};
  m.sigma = {SigmaKind::tanh, s0, s1};
  m.builtin = true;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Mean-field convolution

KernelConvolver::KernelConvolver(const Kernel& kernel, const EmpiricalMeasure& rho, bool use_fast_path)
    : kernel_(kernel), dim_(rho.dim()) {
  if (rho.empty()) throw InvalidArgument("kernel_convolve: empty measure");
  if (use_fast_path && kernel.kind != KernelKind::tanh) {
    fast_ = true;
    mean_ = rho.mean();
    return;
  }
  rho_ = rho;
  if (use_fast_path && kernel.kind == KernelKind::tanh) {
    // tanh(a - b) = (tanh a - tanh b) / (1 - tanh a tanh b): one division per
    // pair once the atoms' tanh values are cached.
    fast_ = true;
    const auto atoms = rho.atoms();
    tanh_atoms_.resize(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) tanh_atoms_[i] = std::tanh(atoms[i]);
  }
}

KernelConvolver KernelConvolver::from_mean(const Kernel& kernel, std::vector<double> mean) {
  if (kernel.kind == KernelKind::tanh) {
    throw InvalidArgument("KernelConvolver::from_mean: kernel has no mean-field fast path");
  }
  KernelConvolver c;
  c.kernel_ = kernel;
  c.dim_ = mean.size();
  c.fast_ = true;
  c.mean_ = std::move(mean);
  return c;
}

void KernelConvolver::apply(std::span<const double> u, std::span<double> out) const {
  if (out.size() != dim_) throw InvalidArgument("kernel_convolve: dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  add_to(u, out);
}

void KernelConvolver::add_to(std::span<const double> u, std::span<double> out) const {
  if (u.size() != dim_ || out.size() != dim_) throw InvalidArgument("kernel_convolve: dimension mismatch");
  if (fast_) {
    switch (kernel_.kind) {
      case KernelKind::zero:
        return;
      case KernelKind::linear:
        for (std::size_t k = 0; k < dim_; ++k) out[k] += -kernel_.strength * (u[k] - mean_[k]);
        return;
      case KernelKind::tanh:
        break;
    }
  }
  if (kernel_.kind == KernelKind::zero) return;
  const std::size_t n = rho_.size();
  const auto atoms = rho_.atoms();
  const double c = -kernel_.strength;
  const bool uniform = rho_.uniform();
  const double inv = 1.0 / static_cast<double>(n);
  const bool cached = !tanh_atoms_.empty();
  for (std::size_t k = 0; k < dim_; ++k) {
    double acc = 0.0;
    const double uk = u[k];
    if (kernel_.kind == KernelKind::linear) {
      for (std::size_t j = 0; j < n; ++j) acc += (uniform ? 1.0 : rho_.weight(j)) * (uk - atoms[j * dim_ + k]);
    } else if (cached) {
      const double ta = std::tanh(uk);
      for (std::size_t j = 0; j < n; ++j) {
        const double tb = tanh_atoms_[j * dim_ + k];
        const double den = 1.0 - ta * tb;
        // Near |tanh| = 1 the quotient loses digits; fall back to tanh there.
        const double term = den > 1e-2 ? (ta - tb) / den : std::tanh(uk - atoms[j * dim_ + k]);
        acc += (uniform ? 1.0 : rho_.weight(j)) * term;
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) acc += (uniform ? 1.0 : rho_.weight(j)) * std::tanh(uk - atoms[j * dim_ + k]);
    }
    out[k] += c * (uniform ? acc * inv : acc);
  }
}

FieldCoeffs kernel_convolve(std::span<const double> u, const EmpiricalMeasure& rho, const Kernel& kernel) {
  FieldCoeffs out(u.size());
  KernelConvolver(kernel, rho, true).apply(u, out);
  return out;
}

FieldCoeffs kernel_convolve_direct(std::span<const double> u, const EmpiricalMeasure& rho, const Kernel& kernel) {
  FieldCoeffs out(u.size());
  KernelConvolver(kernel, rho, false).apply(u, out);
  return out;
}

void total_force(std::span<const double> u, const KernelConvolver& conv, const ModelSpec& model,
                 std::span<double> out) {
  model.potential.apply(u, out);
  conv.add_to(u, out);
}

// ---------------------------------------------------------------------------
// Drift and generator

namespace {

void check_finite(std::span<const double> values, const char* term) {
  for (double x : values) {
    if (!std::isfinite(x)) throw NumericalFailure(std::string("model evaluation produced a non-finite ") + term);
  }
}

void check_shape(const PhasePoint& z, const ModelSpec& model) {
  if (z.u.size() != model.modes() || z.v.size() != model.modes()) {
    throw InvalidArgument("drift: phase point has " + std::to_string(z.u.size()) + "/" +
                          std::to_string(z.v.size()) + " modes, model has " + std::to_string(model.modes()));
  }
}

}  // namespace

PhasePoint drift_full(const PhasePoint& z, const KernelConvolver& conv, const ModelSpec& model) {
  check_shape(z, model);
  const std::size_t m = model.modes();
  std::vector<double> grad_psi(m), mean_field(m);
  model.potential.apply(z.u, grad_psi);
  check_finite(grad_psi, "potential gradient");
  conv.apply(z.u, mean_field);
  check_finite(mean_field, "interaction term K*rho");
  PhasePoint d{z.v, FieldCoeffs(m)};
  const auto lam = model.basis.eigenvalues();
  for (std::size_t k = 0; k < m; ++k) {
    d.v[k] = (-lam[k] * z.u[k] - model.gamma * z.v[k] + grad_psi[k] + mean_field[k]) / model.epsilon;
  }
  check_finite(d.v, "velocity drift");
  return d;
}

PhasePoint drift_full(const PhasePoint& z, const EmpiricalMeasure& rho, const ModelSpec& model) {
  return drift_full(z, KernelConvolver(model.kernel, rho), model);
}

std::vector<double> reduced_coordinates(const PhasePoint& z, std::size_t based_modes) {
  if (based_modes > z.u.size()) throw InvalidArgument("test function based on more modes than the state has");
  std::vector<double> r(2 * based_modes);
  for (std::size_t k = 0; k < based_modes; ++k) {
    r[k] = z.u[k];
    r[based_modes + k] = z.v[k];
  }
  return r;
}

double generator_apply(const TestFunction& phi, const PhasePoint& z, const KernelConvolver& conv,
                       const ModelSpec& model) {
  if (!phi.value || !phi.gradient || !phi.hessian) {
    throw InvalidArgument("generator_apply: test function lacks derivative callbacks");
  }
  const std::size_t mb = phi.based_modes;
  const std::size_t n = 2 * mb;
  const auto r = reduced_coordinates(z, mb);
  const PhasePoint drift = drift_full(z, conv, model);
  std::vector<double> grad(n), hess(n * n), sig(model.modes());
  phi.gradient(r, grad);
  phi.hessian(r, hess);
  model.sigma.apply(z.u, sig);
  const double inv_eps2 = 1.0 / (model.epsilon * model.epsilon);
  double second = 0.0, first = 0.0;
  for (std::size_t k = 0; k < mb; ++k) {
    const std::size_t iv = mb + k;
    second += 0.5 * sig[k] * sig[k] * inv_eps2 * hess[iv * n + iv];
    first += drift.u[k] * grad[k] + drift.v[k] * grad[iv];
  }
  return second + first;
}

double generator_apply(const TestFunction& phi, const PhasePoint& z, const EmpiricalMeasure& rho,
                       const ModelSpec& model) {
  return generator_apply(phi, z, KernelConvolver(model.kernel, rho), model);
}

double lyapunov_rate(const PhasePoint& z, const KernelConvolver& conv, const ModelSpec& model) {
  const PhasePoint d = drift_full(z, conv, model);
  std::vector<double> sig(model.modes());
  model.sigma.apply(z.u, sig);
  double inner = 0.0, trace = 0.0;
  for (std::size_t k = 0; k < model.modes(); ++k) {
    inner += z.u[k] * d.u[k] + z.v[k] * d.v[k];
    trace += 0.5 * sig[k] * sig[k];
  }
  trace /= model.epsilon * model.epsilon;
  return 2.0 * inner + 2.0 * trace;
}

double lyapunov_rate(const PhasePoint& z, const EmpiricalMeasure& rho, const ModelSpec& model) {
  return lyapunov_rate(z, KernelConvolver(model.kernel, rho), model);
}

// ---------------------------------------------------------------------------
// Assumptions

namespace {

struct ProbePair {
  std::vector<double> a, b;
};

// Pairs spread over several spatial scales and separations so that local
// slopes near the origin are sampled as well as far-field ones.
ProbePair make_probe(const NoiseDriver& rng, std::size_t m, std::uint64_t i) {
  const double scale = std::pow(10.0, -2.0 + 3.0 * rng.uniform(i, 0, 0));
  const double sep = std::pow(10.0, -4.0 + 4.0 * rng.uniform(i, 1, 0));
  ProbePair p{std::vector<double>(m), std::vector<double>(m)};
  for (std::size_t k = 0; k < m; ++k) {
    p.a[k] = scale * rng.normal(i, static_cast<std::uint32_t>(2 + k), 1);
    p.b[k] = p.a[k] + sep * rng.normal(i, static_cast<std::uint32_t>(2 + k), 2);
  }
  return p;
}

double dist(std::span<const double> x, std::span<const double> y) {
  double r2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) r2 += (x[k] - y[k]) * (x[k] - y[k]);
  return std::sqrt(r2);
}

void check_declared(double estimated, double declared, const char* hypothesis, const char* what) {
  if (estimated > declared * 1.01 + 1e-12) {
    throw AssumptionViolation(hypothesis, std::string(what) + " Lipschitz ratio " + std::to_string(estimated) +
                                              " exceeds declared constant " + std::to_string(declared));
  }
}

}  // namespace

ModelAssumptions validate_assumptions(const ModelSpec& model, std::size_t probe_count, std::uint64_t seed) {
  if (probe_count < 2) throw InvalidArgument("validate_assumptions: probe_count must be >= 2");
  model.validate();
  const std::size_t m = model.modes();
  const double eps = model.epsilon;

  ModelAssumptions a;
  a.L_sigma = model.declared_L_sigma.value_or(model.sigma.lipschitz());
  a.L_K = model.declared_L_K.value_or(model.kernel.lipschitz());
  a.L_psi = model.declared_L_psi.value_or(model.potential.lipschitz());
  a.s_min = model.sigma.s_min();
  a.s_max = model.sigma.s_max();

  if (!(a.s_min > 0.0)) throw AssumptionViolation("H1", "sigma is not strictly elliptic (s_min = 0)");

  const NoiseDriver rng(seed, NoiseDomain::probes);
  std::vector<double> fa(m), fb(m);
  for (std::uint64_t i = 0; i < probe_count; ++i) {
    const auto p = make_probe(rng, m, i);
    const double d = dist(p.a, p.b);
    if (d == 0.0) continue;
    model.kernel.apply(p.a, fa);
    model.kernel.apply(p.b, fb);
    a.estimated_L_K = std::max(a.estimated_L_K, dist(fa, fb) / d);
    model.potential.apply(p.a, fa);
    model.potential.apply(p.b, fb);
    a.estimated_L_psi = std::max(a.estimated_L_psi, dist(fa, fb) / d);
    model.sigma.apply(p.a, fa);
    model.sigma.apply(p.b, fb);
    a.estimated_L_sigma = std::max(a.estimated_L_sigma, dist(fa, fb) / d);
    for (double s : fa) {
      if (s < a.s_min * (1.0 - 1e-12)) throw AssumptionViolation("H1", "sigma below its declared lower bound");
    }
  }
  check_declared(a.estimated_L_sigma, a.L_sigma, "H1", "sigma");
  check_declared(a.estimated_L_K, a.L_K, "H2", "kernel");
  check_declared(a.estimated_L_psi, a.L_psi, "H3", "potential gradient");

  // Generator diffusion is (1/2) sigma^2 / eps^2 on the v-block.
  a.theta = 0.5 * a.s_min * a.s_min / (eps * eps);
  a.varpi = std::sqrt(static_cast<double>(m)) * a.s_max * model.sigma.derivative_bound() / (eps * eps);
  a.alpha = (a.L_psi + a.L_K) / (2.0 * eps);

  // Per mode the frozen drift has Jacobian [[0, 1], [(-lambda_k + j) / eps, -gamma / eps]]
  // with |j| <= L_psi + L_K; its symmetric part [[0, b], [b, -g]] has top
  // eigenvalue (-g + sqrt(g^2 + 4 b^2)) / 2.
  const double g = model.gamma / eps;
  const double lip = a.L_psi + a.L_K;
  a.alpha_tilde = -1e300;
  for (double lam : model.basis.eigenvalues()) {
    const double b = 0.5 * std::max(std::abs(1.0 - (lam + lip) / eps), std::abs(1.0 - (lam - lip) / eps));
    a.alpha_tilde = std::max(a.alpha_tilde, 0.5 * (-g + std::sqrt(g * g + 4.0 * b * b)));
  }

  double spectral = 0.0;
  for (double lam : model.basis.eigenvalues()) spectral = std::max(spectral, 0.5 * std::abs(1.0 - lam / eps));
  a.linear_spectral_bound = spectral;

  // L V <= c0^2/eps + Tr + |z|^2 [1 + (lambda_max + L_psi + 2 L_K + [c0 > 0]) / eps] + (L_K/eps) m1(rho)^2.
  const double c0 = 0.0;  // every primitive vanishes at the origin
  const double trace_bound = static_cast<double>(m) * a.s_max * a.s_max / (eps * eps);
  a.lambda1 = c0 * c0 / eps + trace_bound;
  a.lambda2_pointwise =
      1.0 + (model.basis.lambda_max() + a.L_psi + 2.0 * a.L_K + (c0 > 0.0 ? 1.0 : 0.0)) / eps;
  a.lambda_rho = a.L_K / eps;
  a.lambda2 = a.lambda2_pointwise + a.lambda_rho;

  a.coupling_rate = spectral + a.alpha + a.L_K / (2.0 * eps) + a.L_sigma * a.L_sigma / (2.0 * eps * eps);
  return a;
}

double lyapunov_bound(const ModelAssumptions& a, const PhasePoint& z, const EmpiricalMeasure& u_marginal) {
  double second = 0.0;
  for (std::size_t j = 0; j < u_marginal.size(); ++j) {
    double r2 = 0.0;
    for (double x : u_marginal.atom(j)) r2 += x * x;
    second += u_marginal.weight(j) * r2;
  }
  return a.lambda1 + a.lambda2_pointwise * z.lyapunov() + a.lambda_rho * (1.0 + second);
}

double equicontinuity_constant(const TestFunction& phi, const ModelSpec& model, const ModelAssumptions& a,
                               double moment_bound, std::size_t samples, std::uint64_t seed) {
  if (phi.support_radius <= 0.0 || phi.support_center.size() != phi.based_dim()) {
    throw InvalidArgument("equicontinuity_constant: test function needs a support ball");
  }
  const std::size_t mb = phi.based_modes;
  const std::size_t n = phi.based_dim();
  const double eps = model.epsilon;
  const double q_max = 0.5 * a.s_max * a.s_max / (eps * eps);
  const double mf = a.L_K * std::sqrt(std::max(moment_bound, 0.0));
  const auto lam = model.basis.eigenvalues();
  const NoiseDriver rng(seed, NoiseDomain::probes);
  std::vector<double> r(n), grad(n), hess(n * n);
  double best = 0.0;
  for (std::uint64_t s = 0; s <= samples; ++s) {
    // Uniform in the ball: Gaussian direction, radius ~ U^{1/n}; sample 0 is the center.
    double r2 = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      r[d] = rng.normal(s, static_cast<std::uint32_t>(d), 0);
      r2 += r[d] * r[d];
    }
    const double radius = s == 0 ? 0.0 : phi.support_radius * std::pow(rng.uniform(s, 1000, 0), 1.0 / static_cast<double>(n));
    for (std::size_t d = 0; d < n; ++d) r[d] = phi.support_center[d] + radius * r[d] / std::sqrt(r2);
    phi.gradient(r, grad);
    phi.hessian(r, hess);
    double second = 0.0, g2 = 0.0, u2 = 0.0, lin2 = 0.0;
    for (std::size_t k = 0; k < mb; ++k) {
      second += q_max * std::abs(hess[(mb + k) * n + mb + k]);
      const double uk = r[k], vk = r[mb + k];
      u2 += uk * uk;
      lin2 += vk * vk;
      const double acc = (-lam[k] * uk - model.gamma * vk) / eps;
      lin2 += acc * acc;
    }
    for (double g : grad) g2 += g * g;
    const double drift = std::sqrt(lin2) + ((a.L_psi + a.L_K) * std::sqrt(u2) + mf) / eps;
    best = std::max(best, second + std::sqrt(g2) * drift);
  }
  return best;
}

std::vector<GaussianMode> linear_gaussian_law(const ModelSpec& model, const PhasePoint& mean0,
                                              std::span<const double> var_u0, std::span<const double> var_v0,
                                              double t) {
  if (model.kernel.kind == KernelKind::tanh || model.potential.kind == PotentialKind::tanh ||
      model.sigma.kind != SigmaKind::constant) {
    throw InvalidArgument("linear_gaussian_law: model must be linear with constant sigma");
  }
  if (!(model.gamma > 0.0)) throw InvalidArgument("linear_gaussian_law: needs gamma > 0");
  const std::size_t m = model.modes();
  if (mean0.u.size() != m || mean0.v.size() != m || var_u0.size() != m || var_v0.size() != m) {
    throw InvalidArgument("linear_gaussian_law: initial data has the wrong number of modes");
  }
  const double eps = model.epsilon;
  const double a = model.potential.kind == PotentialKind::linear ? model.potential.strength : 0.0;
  const double kappa = model.kernel.kind == KernelKind::linear ? model.kernel.strength : 0.0;
  const double s2 = model.sigma.s0 * model.sigma.s0;
  std::vector<GaussianMode> law(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double lam = model.basis.eigenvalue(k);
    const Mat2 em = expm2({0.0, t, -(lam + a) / eps * t, -model.gamma / eps * t});
    law[k].mean = {em[0] * mean0.u[k] + em[1] * mean0.v[k], em[2] * mean0.u[k] + em[3] * mean0.v[k]};
    const double big = lam + a + kappa;
    if (!(big > 0.0)) throw InvalidArgument("linear_gaussian_law: fluctuations have no restoring force");
    const Mat2 e = expm2({0.0, t, -big / eps * t, -model.gamma / eps * t});
    // Sigma(t) = S + E (Sigma0 - S) E^T with the stationary covariance S.
    const double suu = s2 / (2.0 * model.gamma * big);
    const double svv = s2 / (2.0 * model.gamma * eps);
    const Mat2 d{var_u0[k] - suu, 0.0, 0.0, var_v0[k] - svv};
    const Mat2 ed = mat2_mul(e, d);
    const Mat2 et{e[0], e[2], e[1], e[3]};
    const Mat2 r = mat2_mul(ed, et);
    law[k].cov = {suu + r[0], r[1], svv + r[3]};
  }
  return law;
}

}  // namespace mfk
