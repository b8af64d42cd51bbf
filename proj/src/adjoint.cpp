#include "mfk/adjoint.hpp"

#include <algorithm>
#include <cmath>

#include "mfk/error.hpp"
#include "mfk/parallel.hpp"
#include "mfk/test_functions.hpp"

namespace mfk {

FrozenFlow::FrozenFlow(double dt, std::vector<KernelConvolver> steps) : dt_(dt), steps_(std::move(steps)) {
  if (!(dt > 0.0)) throw InvalidArgument("frozen flow: dt must be positive");
}

FrozenFlow FrozenFlow::record(Ensemble ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                              std::vector<Ensemble>* trajectory, std::size_t snapshot_every) {
  if (snapshot_every == 0) throw InvalidArgument("frozen flow: snapshot_every must be positive");
  const std::uint64_t n = step_count(T, cfg.dt);
  std::vector<KernelConvolver> steps;
  steps.reserve(n);
  if (trajectory) trajectory->push_back(ens);
  for (std::uint64_t s = 1; s <= n; ++s) {
    steps.emplace_back(model.kernel, ens.u_marginal(), cfg.fast_path);
    step(ens, model, cfg);
    if (trajectory && s % snapshot_every == 0) trajectory->push_back(ens);
  }
  return FrozenFlow(cfg.dt, std::move(steps));
}

void AdjointProblem::validate() const {
  if (!psi.value) throw InvalidArgument("adjoint: terminal function missing");
  if (!(t >= 0.0)) throw InvalidArgument("adjoint: terminal time must be nonnegative");
  if (t == 0.0) return;
  if (flow.steps() == 0) throw InvalidArgument("adjoint: frozen flow is empty");
  const std::uint64_t n = step_count(t, flow.dt());
  if (n > flow.steps()) throw InvalidArgument("adjoint: frozen flow does not cover [0, t]");
}

namespace {

std::uint64_t step_index_of(double s, const AdjointProblem& prob) {
  if (!(s >= 0.0) || s > prob.t * (1.0 + 1e-12)) throw InvalidArgument("adjoint: need 0 <= s <= t");
  if (s == prob.t) return prob.t == 0.0 ? 0 : step_count(prob.t, prob.flow.dt());
  return step_count(s, prob.flow.dt());
}

// psi(Z_t) for n_samples paths started at z at step k0; path j draws its
// noise from stream `stream0 + j`.
std::vector<double> path_values(const AdjointProblem& prob, double s, const PhasePoint& z, std::size_t n_samples,
                                std::uint64_t seed, const ModelSpec& model, std::uint64_t stream0) {
  prob.validate();
  if (n_samples == 0) throw InvalidArgument("adjoint: n_samples must be positive");
  const std::size_t m = model.modes();
  if (z.u.size() != m || z.v.size() != m) throw InvalidArgument("adjoint: phase point has wrong modes");
  if (prob.psi.based_modes > m) throw InvalidArgument("adjoint: psi based on more modes than the model has");
  const std::uint64_t k0 = step_index_of(s, prob);
  const std::uint64_t k1 = prob.t == 0.0 ? 0 : step_count(prob.t, prob.flow.dt());
  std::vector<double> values(n_samples);
  if (k0 == k1) {
    const double v = prob.psi.value(reduced_coordinates(z, prob.psi.based_modes));
    std::fill(values.begin(), values.end(), v);
    return values;
  }
  const double dt = prob.flow.dt();
  const double eps = model.epsilon;
  const double sqdt = std::sqrt(dt);
  const auto lam = model.basis.eigenvalues();
  std::vector<Mat2> prop(m);
  for (std::size_t k = 0; k < m; ++k) prop[k] = kinetic_propagator(lam[k], model.gamma, eps, dt);
  const NoiseDriver noise(seed, NoiseDomain::feynman_kac);
  const auto count = static_cast<std::ptrdiff_t>(n_samples);
  bool bad = false;

#pragma omp parallel reduction(|| : bad)
  {
    PhasePoint x;
    std::vector<double> force(m), sig(m);
#pragma omp for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < count; ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      x = z;
      for (std::uint64_t n = k0; n < k1; ++n) {
        total_force(x.u, prob.flow.at(n), model, force);
        model.sigma.apply(x.u, sig);
        for (std::size_t k = 0; k < m; ++k) {
          const double xi = noise.normal(stream0 + j, static_cast<std::uint32_t>(k), n);
          const double kick = dt * force[k] / eps + sig[k] * sqdt * xi / eps;
          double un, vn;
          if (prob.scheme == Scheme::splitting) {
            un = prop[k][0] * x.u[k] + prop[k][1] * x.v[k];
            vn = prop[k][2] * x.u[k] + prop[k][3] * x.v[k] + kick;
          } else {
            un = x.u[k] + dt * x.v[k];
            vn = x.v[k] + dt * (-lam[k] * x.u[k] - model.gamma * x.v[k]) / eps + kick;
          }
          x.u[k] = un;
          x.v[k] = vn;
        }
      }
      values[j] = prob.psi.value(reduced_coordinates(x, prob.psi.based_modes));
      if (!std::isfinite(values[j])) bad = true;
    }
  }
  if (bad) throw NumericalFailure("adjoint: non-finite Feynman-Kac sample");
  return values;
}

// Mean as x0 + mean(x - x0): exact for constant samples.
FeynmanKacEstimate summarize(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> d(n);
  for (std::size_t j = 0; j < n; ++j) d[j] = x[j] - x[0];
  FeynmanKacEstimate e;
  e.n_samples = n;
  const double shift = tree_sum(d) / static_cast<double>(n);
  e.mean = x[0] + shift;
  if (n > 1) {
    for (std::size_t j = 0; j < n; ++j) d[j] = (d[j] - shift) * (d[j] - shift);
    e.variance = tree_sum(d) / static_cast<double>(n - 1);
    e.stderr = std::sqrt(e.variance / static_cast<double>(n));
  }
  return e;
}

}  // namespace

FeynmanKacEstimate solve_fk(const AdjointProblem& prob, double s, const PhasePoint& z, std::size_t n_samples,
                            std::uint64_t seed, const ModelSpec& model) {
  const auto values = path_values(prob, s, z, n_samples, seed, model, 0);
  return summarize(values);
}

GradientEstimate grad_fk(const AdjointProblem& prob, double s, const PhasePoint& z, std::size_t n_samples,
                         std::uint64_t seed, const ModelSpec& model, double h) {
  if (!(h > 0.0)) throw InvalidArgument("grad_fk: step must be positive");
  const std::size_t m = model.modes();
  GradientEstimate g;
  g.n_samples = n_samples;
  g.grad.resize(2 * m);
  g.stderr.resize(2 * m);
  std::vector<std::vector<double>> diff(2 * m, std::vector<double>(n_samples));
  for (std::size_t c = 0; c < 2 * m; ++c) {
    PhasePoint zp = z, zm = z;
    double& xp = c < m ? zp.u[c] : zp.v[c - m];
    double& xm = c < m ? zm.u[c] : zm.v[c - m];
    xp += h;
    xm -= h;
    const auto vp = path_values(prob, s, zp, n_samples, seed, model, 0);
    const auto vm = path_values(prob, s, zm, n_samples, seed, model, 0);
    for (std::size_t j = 0; j < n_samples; ++j) diff[c][j] = (vp[j] - vm[j]) / (2.0 * h);
    const auto e = summarize(diff[c]);
    g.grad[c] = e.mean;
    g.stderr[c] = e.stderr;
  }
  double n2 = 0.0;
  for (double x : g.grad) n2 += x * x;
  g.norm = std::sqrt(n2);
  if (g.norm > 0.0) {
    // |grad| ~ <w, grad> with w = grad / |grad|; the per-path projections keep
    // the correlation between components.
    std::vector<double> proj(n_samples, 0.0);
    for (std::size_t c = 0; c < 2 * m; ++c) {
      const double w = g.grad[c] / g.norm;
      for (std::size_t j = 0; j < n_samples; ++j) proj[j] += w * diff[c][j];
    }
    g.norm_stderr = summarize(proj).stderr;
  } else {
    double v = 0.0;
    for (double se : g.stderr) v += se * se;
    g.norm_stderr = std::sqrt(v);
  }
  return g;
}

GradientBoundCert gradient_bound_cert(const ModelAssumptions& a, const TestFunction& psi) {
  if (!(a.theta > 0.0)) {
    throw AssumptionViolation("H1", "degenerate ellipticity (theta = 0): gradient bound unavailable");
  }
  GradientBoundCert cert;
  cert.theta = a.theta;
  cert.varpi = a.varpi;
  cert.alpha_tilde = a.alpha_tilde;
  cert.c = 2.0 * a.theta;
  cert.kappa = (a.varpi / cert.c + 2.0 * a.alpha_tilde) / (2.0 * a.theta);
  cert.c_tilde = std::sqrt(sup_gradient_energy(psi, cert.kappa));
  return cert;
}

DualityReport duality_check(const AdjointProblem& prob, const std::vector<Ensemble>& mu_trajectory,
                            std::size_t n_samples, std::uint64_t seed, const ModelSpec& model) {
  prob.validate();
  if (mu_trajectory.empty()) throw InvalidArgument("duality_check: empty trajectory");
  const Ensemble& last = mu_trajectory.back();
  if (std::abs(last.time - prob.t) > 1e-9 * std::max(1.0, prob.t)) {
    throw InvalidArgument("duality_check: trajectory does not end at the terminal time");
  }
  const double psi_max = sup_norms(prob.psi).value;
  DualityReport rep;

  // I(t) from the terminal snapshot.
  const std::size_t nt = last.size();
  std::vector<double> terminal(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    terminal[i] = prob.psi.value(reduced_coordinates(last.point(i), prob.psi.based_modes));
  }
  const double I_t = tree_sum(terminal) / static_cast<double>(nt);
  rep.I_t = I_t;

  for (const Ensemble& mu : mu_trajectory) {
    if (mu.time > prob.t * (1.0 + 1e-12)) throw InvalidArgument("duality_check: snapshot beyond the terminal time");
    const std::size_t n = mu.size();
    std::vector<double> f(n), var(n);
    const double s = mu.time;
    for (std::size_t i = 0; i < n; ++i) {
      const auto values = path_values(prob, s, mu.point(i), n_samples, seed, model,
                                      static_cast<std::uint64_t>(i) * n_samples);
      const auto e = summarize(values);
      f[i] = e.mean;
      var[i] = e.variance;
    }
    DualityPoint p;
    p.s = s;
    p.I = tree_sum(f) / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    const double var_sum = tree_sum(var);
    const double se_fk2 = var_sum / static_cast<double>(n_samples) / (nn * nn);
    const double se_ens2 = var_sum / (nn * nn);
    p.stderr = std::sqrt(se_fk2 + se_ens2);
    rep.trace.push_back(p);
  }
  rep.worst_slack = -1e300;
  for (const auto& p : rep.trace) {
    const double dev = std::abs(p.I - I_t);
    const double allowed = 3.0 * p.stderr + psi_max * prob.flow.dt();
    if (dev >= rep.max_deviation) {
      rep.max_deviation = dev;
      rep.budget = allowed;
      rep.worst_s = p.s;
    }
    rep.worst_slack = std::max(rep.worst_slack, dev - allowed);
  }
  return rep;
}

}  // namespace mfk
