#include "mfk/particles.hpp"

#include <cmath>
#include <omp.h>

#include "mfk/error.hpp"
#include "mfk/parallel.hpp"

namespace mfk {

// ---------------------------------------------------------------------------
// Initial laws

InitialDistribution InitialDistribution::point_mass(PhasePoint z0) {
  InitialDistribution d;
  d.kind = InitialKind::point_mass;
  d.mean = std::move(z0);
  return d;
}

InitialDistribution InitialDistribution::gaussian(PhasePoint mean, std::vector<double> var_u,
                                                  std::vector<double> var_v) {
  InitialDistribution d;
  d.kind = InitialKind::gaussian;
  d.mean = std::move(mean);
  d.var_u = std::move(var_u);
  d.var_v = std::move(var_v);
  return d;
}

InitialDistribution InitialDistribution::two_cluster(PhasePoint mean, PhasePoint offset, std::vector<double> var_u,
                                                     std::vector<double> var_v, double cluster_weight) {
  InitialDistribution d = gaussian(std::move(mean), std::move(var_u), std::move(var_v));
  d.kind = InitialKind::two_cluster;
  d.offset = std::move(offset);
  d.cluster_weight = cluster_weight;
  return d;
}

void InitialDistribution::validate(std::size_t m) const {
  if (mean.u.size() != m || mean.v.size() != m) {
    throw InvalidArgument("initial distribution: mean has the wrong number of modes");
  }
  if (kind == InitialKind::point_mass) return;
  if (var_u.size() != m || var_v.size() != m) {
    throw InvalidArgument("initial distribution: variance vectors must have length m");
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (!(var_u[k] >= 0.0) || !(var_v[k] >= 0.0)) {
      throw InvalidArgument("initial distribution: negative variance");
    }
  }
  if (kind == InitialKind::two_cluster) {
    if (offset.u.size() != m || offset.v.size() != m) {
      throw InvalidArgument("initial distribution: offset has the wrong number of modes");
    }
    if (!(cluster_weight >= 0.0 && cluster_weight <= 1.0)) {
      throw InvalidArgument("initial distribution: cluster weight outside [0, 1]");
    }
  }
}

std::string to_string(Scheme s) { return s == Scheme::splitting ? "splitting" : "euler-maruyama"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "splitting" || s == "splitting-exact-linear") return Scheme::splitting;
  if (s == "euler-maruyama" || s == "em") return Scheme::euler_maruyama;
  throw InvalidArgument("unknown integrator scheme '" + s + "'");
}

void IntegratorConfig::validate(const ModelSpec& model) const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("integrator: dt must be positive");
  if (dt * model.gamma / model.epsilon >= 10.0) {
    throw InvalidArgument("integrator: dt * gamma / eps must stay below 10");
  }
}

// ---------------------------------------------------------------------------
// Ensemble

Ensemble::Ensemble(std::size_t n, std::size_t m, NoiseDriver noise_driver)
    : noise(noise_driver), streams(n), n_(n), m_(m), u_(n * m, 0.0), v_(n * m, 0.0) {
  if (n == 0 || m == 0) throw InvalidArgument("ensemble: N and m must be positive");
  for (std::size_t i = 0; i < n; ++i) streams[i] = i;
}

PhasePoint Ensemble::point(std::size_t i) const {
  PhasePoint z;
  z.u.assign(u_.begin() + i * m_, u_.begin() + (i + 1) * m_);
  z.v.assign(v_.begin() + i * m_, v_.begin() + (i + 1) * m_);
  return z;
}

void Ensemble::set_point(std::size_t i, const PhasePoint& z) {
  if (z.u.size() != m_ || z.v.size() != m_) throw InvalidArgument("ensemble: phase point has wrong modes");
  std::copy(z.u.begin(), z.u.end(), u_.begin() + i * m_);
  std::copy(z.v.begin(), z.v.end(), v_.begin() + i * m_);
}

EmpiricalMeasure Ensemble::empirical() const {
  std::vector<double> atoms(n_ * 2 * m_);
  for (std::size_t i = 0; i < n_; ++i) {
    std::copy_n(u_.begin() + i * m_, m_, atoms.begin() + i * 2 * m_);
    std::copy_n(v_.begin() + i * m_, m_, atoms.begin() + i * 2 * m_ + m_);
  }
  return EmpiricalMeasure(2 * m_, std::move(atoms));
}

EmpiricalMeasure Ensemble::u_marginal() const { return EmpiricalMeasure(m_, u_); }

EmpiricalMeasure Ensemble::reduced(std::size_t based_modes) const {
  if (based_modes == 0 || based_modes > m_) throw InvalidArgument("ensemble: invalid reduced mode count");
  std::vector<double> atoms(n_ * 2 * based_modes);
  for (std::size_t i = 0; i < n_; ++i) {
    std::copy_n(u_.begin() + i * m_, based_modes, atoms.begin() + i * 2 * based_modes);
    std::copy_n(v_.begin() + i * m_, based_modes, atoms.begin() + i * 2 * based_modes + based_modes);
  }
  return EmpiricalMeasure(2 * based_modes, std::move(atoms));
}

bool operator==(const Ensemble& a, const Ensemble& b) {
  return a.n_ == b.n_ && a.m_ == b.m_ && a.time == b.time && a.step_index == b.step_index && a.u_ == b.u_ &&
         a.v_ == b.v_;
}

Ensemble init_ensemble(const InitialDistribution& dist, std::size_t n, std::size_t m, std::uint64_t seed) {
  dist.validate(m);
  Ensemble ens(n, m, NoiseDriver(seed, NoiseDomain::dynamics));
  const NoiseDriver rng(seed, NoiseDomain::initial_state);
  const auto mm = static_cast<std::uint32_t>(m);
  for (std::size_t i = 0; i < n; ++i) {
    auto u = ens.u(i);
    auto v = ens.v(i);
    double sign = 0.0;
    if (dist.kind == InitialKind::two_cluster) {
      sign = rng.uniform(i, 2 * mm, 0) < dist.cluster_weight ? 1.0 : -1.0;
    }
    for (std::uint32_t k = 0; k < mm; ++k) {
      u[k] = dist.mean.u[k];
      v[k] = dist.mean.v[k];
      if (dist.kind == InitialKind::point_mass) continue;
      if (dist.kind == InitialKind::two_cluster) {
        u[k] += sign * dist.offset.u[k];
        v[k] += sign * dist.offset.v[k];
      }
      u[k] += std::sqrt(dist.var_u[k]) * rng.normal(i, k, 0);
      v[k] += std::sqrt(dist.var_v[k]) * rng.normal(i, mm + k, 0);
    }
  }
  return ens;
}

// ---------------------------------------------------------------------------
// Stepping

namespace {

int worker_count(std::size_t requested) {
  return requested == 0 ? omp_get_max_threads() : static_cast<int>(requested);
}

}  // namespace

std::vector<double> ensemble_forces(const Ensemble& ens, const ModelSpec& model, bool fast_path) {
  const std::size_t n = ens.size();
  const std::size_t m = ens.modes();
  if (m != model.modes()) throw InvalidArgument("ensemble and model disagree on the mode count");
  const KernelConvolver conv(model.kernel, ens.u_marginal(), fast_path);
  std::vector<double> forces(n * m);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    total_force(ens.u(idx), conv, model, std::span<double>(forces.data() + idx * m, m));
  }
  return forces;
}

void step(Ensemble& ens, const ModelSpec& model, const IntegratorConfig& cfg) {
  cfg.validate(model);
  const std::size_t n = ens.size();
  const std::size_t m = ens.modes();
  const int workers = worker_count(cfg.workers);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(workers);
  const std::vector<double> forces = ensemble_forces(ens, model, cfg.fast_path);

  const double dt = cfg.dt;
  const double eps = model.epsilon;
  const double sqdt = std::sqrt(dt);
  const auto lam = model.basis.eigenvalues();
  std::vector<Mat2> prop(m);
  for (std::size_t k = 0; k < m; ++k) prop[k] = kinetic_propagator(lam[k], model.gamma, eps, dt);
  const std::uint64_t stepno = ens.step_index;
  const auto count = static_cast<std::ptrdiff_t>(n);
  std::ptrdiff_t bad = -1;

#pragma omp parallel for schedule(static) reduction(max : bad)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto u = ens.u(i);
    auto v = ens.v(i);
    const double* f = forces.data() + i * m;
    std::vector<double> sig(m);
    model.sigma.apply(u, sig);
    const std::uint64_t stream = ens.streams[i];
    for (std::size_t k = 0; k < m; ++k) {
      const double xi = ens.noise.normal(stream, static_cast<std::uint32_t>(k), stepno);
      const double kick = dt * f[k] / eps + sig[k] * sqdt * xi / eps;
      double un, vn;
      if (cfg.scheme == Scheme::splitting) {
        const Mat2& p = prop[k];
        un = p[0] * u[k] + p[1] * v[k];
        vn = p[2] * u[k] + p[3] * v[k] + kick;
      } else {
        un = u[k] + dt * v[k];
        vn = v[k] + dt * (-lam[k] * u[k] - model.gamma * v[k]) / eps + kick;
      }
      u[k] = un;
      v[k] = vn;
      if (!std::isfinite(un) || !std::isfinite(vn)) bad = std::max(bad, ii);
    }
  }
  omp_set_num_threads(saved);
  if (bad >= 0) {
    throw NumericalFailure("blow-up at step " + std::to_string(stepno + 1) + ", particle " + std::to_string(bad));
  }
  ens.step_index += 1;
  ens.time = snap_to_grid(ens.time + dt, dt);
}

std::uint64_t step_count(double T, double dt) {
  if (!(T >= 0.0) || !(dt > 0.0)) throw InvalidArgument("run: need T >= 0 and dt > 0");
  const double ratio = T / dt;
  const double n = std::round(ratio);
  if (std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
    throw InvalidArgument("run: T must be an integer multiple of dt");
  }
  return static_cast<std::uint64_t>(n);
}

void run(Ensemble& ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
         std::size_t snapshot_every, const SnapshotObserver& observer) {
  if (snapshot_every == 0) throw InvalidArgument("run: snapshot_every must be positive");
  const std::uint64_t n = step_count(T, cfg.dt);
  if (observer) observer(ens);
  for (std::uint64_t s = 1; s <= n; ++s) {
    step(ens, model, cfg);
    if (observer && s % snapshot_every == 0) observer(ens);
  }
}

std::vector<Ensemble> run(Ensemble ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                          std::size_t snapshot_every) {
  std::vector<Ensemble> out;
  run(ens, model, cfg, T, snapshot_every, [&](const Ensemble& e) { out.push_back(e); });
  return out;
}

// ---------------------------------------------------------------------------
// Coupling

CoupledPair couple(Ensemble a, Ensemble b) {
  if (a.size() != b.size() || a.modes() != b.modes()) {
    throw InvalidArgument("couple: ensembles differ in N or m");
  }
  b.noise = a.noise;
  b.streams = a.streams;
  b.step_index = a.step_index;
  b.time = a.time;
  return {std::move(a), std::move(b)};
}

void step(CoupledPair& pair, const ModelSpec& model, const IntegratorConfig& cfg) {
  step(pair.a, model, cfg);
  step(pair.b, model, cfg);
}

double coupling_cost(const CoupledPair& pair) {
  const std::size_t n = pair.a.size();
  const std::size_t m = pair.a.modes();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const auto ua = pair.a.u(i), ub = pair.b.u(i), va = pair.a.v(i), vb = pair.b.v(i);
    for (std::size_t k = 0; k < m; ++k) {
      acc += (ua[k] - ub[k]) * (ua[k] - ub[k]) + (va[k] - vb[k]) * (va[k] - vb[k]);
    }
    dist[i] = std::sqrt(acc);
  }
  return tree_sum(dist) / static_cast<double>(n);
}

}  // namespace mfk
