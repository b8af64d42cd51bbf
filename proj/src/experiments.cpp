#include "mfk/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mfk/error.hpp"
#include "mfk/io.hpp"
#include "mfk/noise.hpp"
#include "mfk/parallel.hpp"
#include "mfk/test_functions.hpp"

namespace mfk {

namespace {

constexpr std::uint64_t kReferenceSalt = 0x5245464552454e43ULL;
constexpr std::uint64_t kProjectionSalt = 0x534c494345445731ULL;
constexpr std::uint64_t kBootstrapSalt = 0x424f4f5453545250ULL;
constexpr std::uint64_t kDualitySalt = 0x4455414c49545921ULL;

Check make_check(std::string name, bool passed, std::string detail) {
  return Check{std::move(name), passed, std::move(detail)};
}

std::string describe(double value, const char* op, double limit) {
  std::ostringstream s;
  s << fmt(value) << ' ' << op << ' ' << fmt(limit);
  return s.str();
}

double sample_mean(const std::vector<double>& x) {
  return x.empty() ? 0.0 : tree_sum(x) / static_cast<double>(x.size());
}

double sample_stderr(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

std::optional<ModelAssumptions> try_assumptions(const RunConfig& cfg, const ModelSpec& model) {
  try {
    return validate_assumptions(model, cfg.get_size("model.probe_count"), cfg.seed());
  } catch (const AssumptionViolation&) {
    return std::nullopt;
  }
}

ModelAssumptions require_assumptions(const RunConfig& cfg, const ModelSpec& model) {
  return validate_assumptions(model, cfg.get_size("model.probe_count"), cfg.seed());
}

Check lyapunov_check(std::size_t flags) {
  return make_check("lyapunov", flags == 0, std::to_string(flags) + " flagged steps");
}

KernelConvolver ensemble_convolver(const Ensemble& ens, const ModelSpec& model, bool fast_path) {
  return KernelConvolver(model.kernel, ens.u_marginal(), fast_path);
}

std::vector<double> observable_values(const TestFunction& phi, const Ensemble& ens) {
  std::vector<double> out(ens.size());
  const std::size_t mb = phi.based_modes;
  const std::size_t n = ens.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    double r[64];
    const auto u = ens.u(i);
    const auto v = ens.v(i);
    for (std::size_t k = 0; k < mb; ++k) {
      r[k] = u[k];
      r[mb + k] = v[k];
    }
    out[i] = phi.value(std::span<const double>(r, 2 * mb));
  }
  return out;
}

double observable_mean(const TestFunction& phi, const Ensemble& ens) {
  return tree_sum(observable_values(phi, ens)) / static_cast<double>(ens.size());
}

void check_based_modes(const TestFunction& phi, std::size_t m) {
  if (phi.based_modes > m || phi.based_modes > 32)
    throw ConfigError("test function based on " + std::to_string(phi.based_modes) + " modes, model has " +
                      std::to_string(m));
}

PhasePoint shift_from_config(const RunConfig& cfg, std::size_t m) {
  PhasePoint s;
  s.u = broadcast(cfg.get_list("experiment.shift_u"), m, "experiment.shift_u");
  s.v = broadcast(cfg.get_list("experiment.shift_v"), m, "experiment.shift_v");
  return s;
}

}  // namespace

bool all_passed(const std::vector<Check>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::map<std::string, double> constants_map(const ModelAssumptions& a) {
  return {
      {"L_sigma", a.L_sigma},
      {"L_K", a.L_K},
      {"L_psi", a.L_psi},
      {"theta", a.theta},
      {"alpha", a.alpha},
      {"alpha_tilde", a.alpha_tilde},
      {"varpi", a.varpi},
      {"Lambda1", a.lambda1},
      {"Lambda2", a.lambda2},
      {"Lambda2_pointwise", a.lambda2_pointwise},
      {"Lambda_rho", a.lambda_rho},
      {"s_min", a.s_min},
      {"s_max", a.s_max},
      {"linear_spectral_bound", a.linear_spectral_bound},
      {"C", a.coupling_rate},
  };
}

std::uint64_t repetition_seed(std::uint64_t master, std::uint64_t r) {
  if (r == 0) return master;
  return splitmix64(master ^ (r * 0x9e3779b97f4a7c15ULL));
}

std::vector<double> particle_v(const Ensemble& ens) {
  std::vector<double> out(ens.size());
  const std::size_t n = ens.size();
  const std::size_t m = ens.modes();
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = ens.u(i);
    const auto v = ens.v(i);
    double s = 1.0;
    for (std::size_t k = 0; k < m; ++k) s += u[k] * u[k] + v[k] * v[k];
    out[i] = s;
  }
  return out;
}

LyapunovMonitor run_monitored(Ensemble& ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                              std::size_t snapshot_every, const ModelAssumptions& a,
                              const SnapshotObserver& observer) {
  LyapunovMonitor monitor(a.lambda1, a.lambda2);
  const std::uint64_t n = step_count(T, cfg.dt);
  monitor.record(ens.time, particle_v(ens));
  if (observer) observer(ens);
  for (std::uint64_t s = 1; s <= n; ++s) {
    step(ens, model, cfg);
    monitor.record(ens.time, particle_v(ens));
    if (observer && snapshot_every > 0 && s % snapshot_every == 0) observer(ens);
  }
  return monitor;
}

LyapunovMonitor lyapunov_track(const std::vector<Ensemble>& trajectory, const ModelAssumptions& a) {
  LyapunovMonitor monitor(a.lambda1, a.lambda2);
  for (const auto& e : trajectory) monitor.record(e.time, particle_v(e));
  return monitor;
}

EquicontinuityReport check_equicontinuity(const std::vector<Ensemble>& snapshots, const TestFunction& phi,
                                          const ModelSpec& model, const ModelAssumptions& a) {
  EquicontinuityReport rep;
  if (snapshots.size() < 2) return rep;
  check_based_modes(phi, snapshots.front().modes());
  std::vector<std::vector<double>> values;
  values.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    values.push_back(observable_values(phi, s));
    const auto v = particle_v(s);
    rep.moment_bound = std::max(rep.moment_bound, sample_mean(v) + 3.0 * sample_stderr(v));
  }
  rep.constant = equicontinuity_constant(phi, model, a, rep.moment_bound);
  rep.worst_slack = -1e300;
  const std::size_t n = snapshots.front().size();
  std::vector<double> diff(n);
  for (std::size_t p = 0; p < snapshots.size(); ++p) {
    for (std::size_t q = p + 1; q < snapshots.size(); ++q) {
      for (std::size_t i = 0; i < n; ++i) diff[i] = values[q][i] - values[p][i];
      const double gap = std::abs(sample_mean(diff));
      const double slack =
          gap - rep.constant * std::abs(snapshots[q].time - snapshots[p].time) - 6.0 * sample_stderr(diff);
      rep.worst_slack = std::max(rep.worst_slack, slack);
      ++rep.pairs;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

ParticleRunResult exp_particles(const RunConfig& cfg, const SnapshotObserver& observer) {
  const ModelSpec model = model_from_config(cfg);
  const InitialDistribution dist = initial_from_config(cfg);
  const IntegratorConfig ic = integrator_from_config(cfg);
  ic.validate(model);
  ParticleRunResult res;
  res.assumptions = try_assumptions(cfg, model);
  res.final_state = init_ensemble(dist, cfg.get_size("integrator.N"), model.modes(), cfg.seed());
  res.final_state.model_ref = model.name;
  const double T = cfg.get_double("integrator.T");
  const std::size_t every = cfg.get_size("integrator.snapshot_every");
  if (res.assumptions) {
    res.monitor = run_monitored(res.final_state, model, ic, T, every, *res.assumptions, observer);
    res.checks.push_back(lyapunov_check(res.monitor.flags().size()));
  } else {
    run(res.final_state, model, ic, T, every, observer);
  }
  return res;
}

// ---------------------------------------------------------------------------

std::uint64_t reference_seed(const RunConfig& cfg) { return splitmix64(cfg.seed() ^ kReferenceSalt); }

EmpiricalMeasure particle_sample(const RunConfig& cfg, std::size_t n, std::uint64_t seed,
                                 const ModelAssumptions* a, std::size_t* flags) {
  const ModelSpec model = model_from_config(cfg);
  const IntegratorConfig ic = integrator_from_config(cfg);
  ic.validate(model);
  Ensemble ens = init_ensemble(initial_from_config(cfg), n, model.modes(), seed);
  const double t = cfg.get_double("experiment.t");
  if (a != nullptr) {
    const auto monitor = run_monitored(ens, model, ic, t, 0, *a);
    if (flags != nullptr) *flags += monitor.flags().size();
  } else {
    run(ens, model, ic, t, 1, {});
  }
  return ens.empirical();
}

EmpiricalMeasure reference_sample(const RunConfig& cfg, std::size_t n, std::uint64_t seed) {
  const std::string kind = cfg.get_string("experiment.reference");
  const ModelSpec model = model_from_config(cfg);
  const std::size_t m = model.modes();
  const double t = cfg.get_double("experiment.t");
  if (kind == "analytic") {
    if (model.kernel.kind == KernelKind::tanh || model.potential.kind == PotentialKind::tanh ||
        model.sigma.kind != SigmaKind::constant)
      throw ConfigError("analytic reference needs a linear model");
    const InitialDistribution dist = initial_from_config(cfg);
    if (dist.kind == InitialKind::two_cluster) throw ConfigError("analytic reference needs a Gaussian initial law");
    const auto law = linear_gaussian_law(model, dist.mean, dist.var_u, dist.var_v, t);
    const NoiseDriver noise(seed, NoiseDomain::reference);
    std::vector<double> atoms(n * 2 * m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        const auto& g = law[k];
        const double l11 = std::sqrt(std::max(g.cov[0], 0.0));
        const double l21 = l11 > 0.0 ? g.cov[1] / l11 : 0.0;
        const double l22 = std::sqrt(std::max(g.cov[2] - l21 * l21, 0.0));
        const double x1 = noise.normal(i, static_cast<std::uint32_t>(2 * k), 0);
        const double x2 = noise.normal(i, static_cast<std::uint32_t>(2 * k + 1), 0);
        atoms[i * 2 * m + k] = g.mean[0] + l11 * x1;
        atoms[i * 2 * m + m + k] = g.mean[1] + l21 * x1 + l22 * x2;
      }
    }
    return EmpiricalMeasure(2 * m, std::move(atoms));
  }
  if (kind == "large-n") return particle_sample(cfg, n, seed);
  if (kind == "fpe-grid") {
    if (m != 1) throw ConfigError("fpe-grid reference needs galerkin.modes = 1");
    FpeConfig fc = fpe_from_config(cfg);
    const auto trace = fpe_run(initial_density(cfg), model, fc, t, 0);
    return sample_density(trace.snapshots.back(), n, seed).empirical();
  }
  throw ConfigError("unknown experiment.reference '" + kind + "'");
}

ConvergenceTable exp_meanfield_convergence(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  const std::size_t m = model.modes();
  ConvergenceTable table;
  table.assumptions = require_assumptions(cfg, model);
  table.reference = cfg.get_string("experiment.reference");
  table.n_ref = cfg.get_size("experiment.n_ref");
  table.t = cfg.get_double("experiment.t");

  std::vector<std::size_t> sweep;
  for (double x : cfg.get_list("experiment.N_list")) {
    if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError("experiment.N_list entries must be positive integers");
    sweep.push_back(static_cast<std::size_t>(x));
  }
  if (sweep.empty()) throw ConfigError("experiment.N_list is empty");
  std::sort(sweep.begin(), sweep.end());
  const std::size_t n_max = sweep.back();
  const std::size_t reps = cfg.get_size("experiment.repetitions");
  if (reps == 0) throw ConfigError("experiment.repetitions must be positive");
  if (table.reference == "large-n" && table.n_ref < 4 * n_max)
    throw ConfigError("large-n reference needs n_ref >= 4 x the largest N");

  const std::size_t cap = cfg.get_size("experiment.exact_cap");
  const std::string method = cfg.get_string("experiment.method");
  if (method == "exact") {
    if (n_max > cap) throw ConfigError("exact W1 requested above experiment.exact_cap");
    table.method = W1Method::exact_matching;
  } else if (method == "sliced") {
    table.method = W1Method::sliced;
  } else if (method == "auto") {
    table.method = n_max <= cap ? W1Method::exact_matching : W1Method::sliced;
  } else {
    throw ConfigError("experiment.method must be auto, exact or sliced");
  }

  const EmpiricalMeasure ref = reference_sample(cfg, table.n_ref, reference_seed(cfg));
  const auto atoms = ref.atoms();
  const std::size_t dim = 2 * m;
  auto slice = [&](std::size_t first, std::size_t count) {
    return EmpiricalMeasure(dim, std::vector<double>(atoms.begin() + static_cast<std::ptrdiff_t>(first * dim),
                                                     atoms.begin() + static_cast<std::ptrdiff_t>((first + count) * dim)));
  };

  std::optional<SlicedProjector> projector;
  SlicedProjector::Projected ref_proj;
  if (table.method == W1Method::sliced) {
    projector.emplace(dim, cfg.get_size("experiment.n_projections"), splitmix64(cfg.seed() ^ kProjectionSalt));
    ref_proj = projector->project(ref);
    const std::size_t half = table.n_ref / 2;
    table.split_half = projector->distance(projector->project(slice(0, half)), projector->project(slice(half, half)));
  } else {
    if (table.n_ref < 2 * n_max) throw ConfigError("exact W1 needs n_ref >= 2 x the largest N");
    table.split_half = w1_exact(slice(0, n_max), slice(n_max, n_max), cap).value;
  }

  for (std::size_t n : sweep) {
    ConvergenceRow row;
    row.n = n;
    row.repetitions = reps;
    row.method = table.method;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto sample = particle_sample(cfg, n, repetition_seed(cfg.seed(), r), &table.assumptions,
                                          &table.lyapunov_flags);
      const double w = table.method == W1Method::sliced ? projector->distance(projector->project(sample), ref_proj)
                                                        : w1_exact(sample, slice(0, n), cap).value;
      row.values.push_back(w);
    }
    row.mean = sample_mean(row.values);
    row.stderr = sample_stderr(row.values);
    table.rows.push_back(std::move(row));
  }

  bool decreasing = true;
  std::string trend;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    if (k > 0 && !(table.rows[k].mean < table.rows[k - 1].mean)) decreasing = false;
    trend += (k ? " " : "") + fmt(table.rows[k].mean);
  }
  table.checks.push_back(make_check("w1 strictly decreasing in N", decreasing, trend));
  table.checks.push_back(make_check("largest N within 2x split-half error",
                                    table.rows.back().mean < 2.0 * table.split_half,
                                    describe(table.rows.back().mean, "<", 2.0 * table.split_half)));
  table.checks.push_back(lyapunov_check(table.lyapunov_flags));
  return table;
}

// ---------------------------------------------------------------------------

StabilityResult exp_stability(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  const std::size_t m = model.modes();
  const IntegratorConfig ic = integrator_from_config(cfg);
  ic.validate(model);
  const std::size_t n = cfg.get_size("integrator.N");
  const double T = cfg.get_double("integrator.T");
  const std::size_t every = std::max<std::size_t>(1, cfg.get_size("integrator.snapshot_every"));
  const std::size_t n_proj = cfg.get_size("experiment.n_projections");

  StabilityResult res;
  res.assumptions = try_assumptions(cfg, model);
  res.identical = cfg.get_bool("experiment.identical");
  const PhasePoint shift = shift_from_config(cfg, m);
  res.delta0 = res.identical ? 0.0 : std::sqrt(shift.norm2());
  if (!res.identical && res.delta0 == 0.0) res.identical = true;
  if (res.assumptions) res.rate = res.assumptions->coupling_rate;

  Ensemble a = init_ensemble(initial_from_config(cfg), n, m, cfg.seed());
  Ensemble b = a;
  if (!res.identical) {
    for (std::size_t i = 0; i < n; ++i) {
      auto u = b.u(i);
      auto v = b.v(i);
      for (std::size_t k = 0; k < m; ++k) {
        u[k] += shift.u[k];
        v[k] += shift.v[k];
      }
    }
  }
  CoupledPair pair = couple(a, b);
  CoupledPair control = couple(a, a);
  std::optional<LyapunovMonitor> monitor;
  if (res.assumptions) monitor.emplace(res.assumptions->lambda1, res.assumptions->lambda2);

  bool bitwise = true;
  auto snapshot = [&]() {
    res.t.push_back(pair.a.time);
    const double cost = coupling_cost(pair);
    if (res.identical) {
      res.ratio.push_back(cost);
      res.ratio_sliced.push_back(0.0);
    } else {
      res.ratio.push_back(cost / res.delta0);
      const double lower = w1_sliced(pair.a.empirical(), pair.b.empirical(), n_proj,
                                     splitmix64(cfg.seed() ^ kProjectionSalt), 0)
                               .value;
      res.ratio_sliced.push_back(lower / res.delta0);
    }
    res.bound.push_back(std::exp(res.rate * pair.a.time));
    bitwise = bitwise && control.a == control.b && coupling_cost(control) == 0.0;
  };

  const std::uint64_t steps = step_count(T, ic.dt);
  if (monitor) monitor->record(pair.a.time, particle_v(pair.a));
  snapshot();
  for (std::uint64_t s = 1; s <= steps; ++s) {
    step(pair, model, ic);
    step(control, model, ic);
    if (monitor) monitor->record(pair.a.time, particle_v(pair.a));
    if (s % every == 0 || s == steps) snapshot();
  }
  res.identical_bitwise = bitwise;
  if (monitor) res.lyapunov_flags = monitor->flags().size();

  if (res.identical) {
    const bool zero = std::all_of(res.ratio.begin(), res.ratio.end(), [](double c) { return c == 0.0; });
    res.checks.push_back(make_check("identical input stays at zero distance", zero, "delta0 = 0, ratios undefined"));
  } else if (res.assumptions) {
    double worst = -1e300;
    for (std::size_t k = 0; k < res.t.size(); ++k) worst = std::max(worst, res.ratio[k] / (1.1 * res.bound[k]));
    res.checks.push_back(
        make_check("ratio <= 1.1 exp(C t)", worst <= 1.0, "max ratio / (1.1 bound) = " + fmt(worst)));
  }
  res.checks.push_back(make_check("identical control pair bitwise", res.identical_bitwise,
                                  res.identical_bitwise ? "bit-identical" : "diverged"));
  if (res.assumptions) res.checks.push_back(lyapunov_check(res.lyapunov_flags));
  return res;
}

// ---------------------------------------------------------------------------

std::vector<TestFunction> residual_test_functions(const RunConfig& cfg) {
  const auto cu = cfg.get_list("experiment.bump_center_u");
  const auto cv = cfg.get_list("experiment.bump_center_v");
  const auto rr = cfg.get_list("experiment.bump_radius");
  if (cu.size() != cv.size() || cu.size() != rr.size() || cu.empty())
    throw ConfigError("bump_center_u, bump_center_v and bump_radius must have equal nonzero length");
  std::vector<TestFunction> out;
  for (std::size_t p = 0; p < cu.size(); ++p) {
    if (!(rr[p] > 0.0)) throw ConfigError("experiment.bump_radius entries must be positive");
    out.push_back(make_bump({cu[p], cv[p]}, rr[p]));
  }
  return out;
}

double mean_generator(const TestFunction& phi, const Ensemble& ens, const ModelSpec& model,
                      const KernelConvolver& conv) {
  const std::size_t n = ens.size();
  const std::size_t mb = phi.based_modes;
  const bool has_support = phi.support_radius > 0.0 && phi.support_center.size() == 2 * mb;
  const double r2 = phi.support_radius * phi.support_radius;
  std::vector<double> values(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = ens.u(i);
    const auto v = ens.v(i);
    if (has_support) {
      double d = 0.0;
      for (std::size_t k = 0; k < mb; ++k) {
        const double du = u[k] - phi.support_center[k];
        const double dv = v[k] - phi.support_center[mb + k];
        d += du * du + dv * dv;
      }
      if (d >= r2) continue;
    }
    values[i] = generator_apply(phi, ens.point(i), conv, model);
  }
  return tree_sum(values) / static_cast<double>(n);
}

std::vector<double> max_weak_residual(Ensemble ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                                      const std::vector<TestFunction>& phis, LyapunovMonitor* monitor,
                                      std::vector<Ensemble>* snapshots, std::size_t stride) {
  for (const auto& phi : phis) check_based_modes(phi, ens.modes());
  const std::size_t P = phis.size();
  const std::uint64_t steps = step_count(T, cfg.dt);
  std::vector<double> start(P), prev_gen(P), integral(P, 0.0), worst(P, 0.0);
  KernelConvolver conv = ensemble_convolver(ens, model, cfg.fast_path);
  for (std::size_t p = 0; p < P; ++p) {
    start[p] = observable_mean(phis[p], ens);
    prev_gen[p] = mean_generator(phis[p], ens, model, conv);
  }
  if (monitor) monitor->record(ens.time, particle_v(ens));
  if (snapshots) snapshots->push_back(ens);
  for (std::uint64_t s = 1; s <= steps; ++s) {
    step(ens, model, cfg);
    conv = ensemble_convolver(ens, model, cfg.fast_path);
    for (std::size_t p = 0; p < P; ++p) {
      const double gen = mean_generator(phis[p], ens, model, conv);
      integral[p] += 0.5 * cfg.dt * (prev_gen[p] + gen);
      prev_gen[p] = gen;
      const double r = observable_mean(phis[p], ens) - start[p] - integral[p];
      worst[p] = std::max(worst[p], std::abs(r));
    }
    if (monitor) monitor->record(ens.time, particle_v(ens));
    if (snapshots && stride > 0 && s % stride == 0) snapshots->push_back(ens);
  }
  return worst;
}

WeakResidualResult exp_weak_residual(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  const std::size_t m = model.modes();
  const InitialDistribution dist = initial_from_config(cfg);
  IntegratorConfig ic = integrator_from_config(cfg);
  const auto ns = cfg.get_list("experiment.levels_N");
  const auto dts = cfg.get_list("experiment.levels_dt");
  if (ns.size() != dts.size() || ns.size() < 2) throw ConfigError("levels_N and levels_dt need equal length >= 2");
  const std::size_t reps = std::max<std::size_t>(1, cfg.get_size("experiment.repetitions"));
  const double T = cfg.get_double("experiment.t");
  const auto phis = residual_test_functions(cfg);
  const std::size_t stride = std::max<std::size_t>(1, cfg.get_size("experiment.equicontinuity_stride"));

  WeakResidualResult res;
  res.assumptions = require_assumptions(cfg, model);
  std::vector<Ensemble> snaps;
  for (std::size_t l = 0; l < ns.size(); ++l) {
    if (!(ns[l] >= 1.0)) throw ConfigError("experiment.levels_N entries must be positive");
    ResidualLevel level;
    level.n = static_cast<std::size_t>(ns[l]);
    level.dt = dts[l];
    ic.dt = level.dt;
    ic.validate(model);
    std::vector<std::vector<double>> per_phi(phis.size());
    for (std::size_t r = 0; r < reps; ++r) {
      LyapunovMonitor monitor(res.assumptions.lambda1, res.assumptions.lambda2);
      const bool keep = l + 1 == ns.size() && r == 0;
      const auto worst = max_weak_residual(init_ensemble(dist, level.n, m, repetition_seed(cfg.seed(), r)), model,
                                           ic, T, phis, &monitor, keep ? &snaps : nullptr, stride);
      res.lyapunov_flags += monitor.flags().size();
      for (std::size_t p = 0; p < phis.size(); ++p) per_phi[p].push_back(worst[p]);
    }
    for (std::size_t p = 0; p < phis.size(); ++p) {
      level.mean_max_residual.push_back(sample_mean(per_phi[p]));
      level.stderr.push_back(sample_stderr(per_phi[p]));
    }
    res.levels.push_back(std::move(level));
  }

  for (std::size_t l = 1; l < res.levels.size(); ++l) {
    const auto& lo = res.levels[l - 1];
    const auto& hi = res.levels[l];
    const double n_factor = std::sqrt(static_cast<double>(lo.n) / static_cast<double>(hi.n));
    const double dt_factor = hi.dt / lo.dt;
    const double band_lo = std::min(n_factor, dt_factor) / 1.5;
    const double band_hi = std::min(1.0, std::max(n_factor, dt_factor) * 1.5);
    std::vector<double> row;
    for (std::size_t p = 0; p < phis.size(); ++p) {
      const double ratio = hi.mean_max_residual[p] / lo.mean_max_residual[p];
      row.push_back(ratio);
      const bool ok = ratio < 1.0 && ratio >= band_lo && ratio <= band_hi;
      res.checks.push_back(make_check("residual refinement " + std::to_string(l) + " phi " + std::to_string(p), ok,
                                      "ratio " + fmt(ratio) + " in [" + fmt(band_lo) + ", " + fmt(band_hi) + "]"));
    }
    res.ratios.push_back(std::move(row));
  }

  for (std::size_t p = 0; p < phis.size(); ++p) {
    res.equicontinuity.push_back(check_equicontinuity(snaps, phis[p], model, res.assumptions));
    const auto& e = res.equicontinuity.back();
    res.checks.push_back(make_check("equicontinuity phi " + std::to_string(p), e.passed(),
                                    "worst slack " + fmt(e.worst_slack) + ", C = " + fmt(e.constant)));
  }
  res.checks.push_back(lyapunov_check(res.lyapunov_flags));
  return res;
}

// ---------------------------------------------------------------------------

Ensemble sample_density(const DensityField& rho, std::size_t n, std::uint64_t seed) {
  const PhaseGrid& g = rho.grid;
  std::vector<double> cumulative(rho.mass.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < rho.mass.size(); ++c) {
    acc += std::max(rho.mass[c], 0.0);
    cumulative[c] = acc;
  }
  if (!(acc > 0.0)) throw InvalidArgument("sample_density: density has no mass");
  const NoiseDriver draw(seed, NoiseDomain::initial_state);
  Ensemble ens(n, 1, NoiseDriver(seed, NoiseDomain::dynamics));
  for (std::size_t i = 0; i < n; ++i) {
    const double target = draw.uniform(i, 0, 0) * acc;
    std::size_t c = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), target) -
                                             cumulative.begin());
    c = std::min(c, cumulative.size() - 1);
    const std::size_t iu = c / g.n_v;
    const std::size_t jv = c % g.n_v;
    ens.u(i)[0] = -g.R_u + (static_cast<double>(iu) + draw.uniform(i, 1, 0)) * g.h_u();
    ens.v(i)[0] = -g.R_v + (static_cast<double>(jv) + draw.uniform(i, 2, 0)) * g.h_v();
  }
  ens.time = rho.time;
  return ens;
}

double bootstrap_fluctuation(std::span<const double> points, std::size_t resamples, std::uint64_t seed) {
  if (points.empty() || resamples == 0) return 0.0;
  const auto original = Distribution1D::atoms(std::vector<double>(points.begin(), points.end()));
  const NoiseDriver draw(seed, NoiseDomain::bootstrap);
  const std::size_t n = points.size();
  std::vector<double> dist(resamples);
  std::vector<double> boot(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = std::min(n - 1, static_cast<std::size_t>(draw.uniform(b, 0, i) * static_cast<double>(n)));
      boot[i] = points[j];
    }
    dist[b] = w1_marginal_1d(Distribution1D::atoms(boot), original);
  }
  return sample_mean(dist);
}

DensityField initial_density(const RunConfig& cfg) {
  const InitialDistribution dist = initial_from_config(cfg);
  if (dist.mean.modes() != 1) throw ConfigError("grid initial density needs galerkin.modes = 1");
  if (dist.kind != InitialKind::gaussian) throw ConfigError("grid initial density needs initial.kind = gaussian");
  if (!(dist.var_u[0] > 0.0) || !(dist.var_v[0] > 0.0))
    throw ConfigError("grid initial density needs positive variances");
  return gaussian_density(grid_from_config(cfg), {dist.mean.u[0], dist.mean.v[0]},
                          {dist.var_u[0], 0.0, dist.var_v[0]});
}

BridgeResult exp_galerkin_bridge(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  if (model.modes() != 1) throw ConfigError("bridge needs galerkin.modes = 1");
  const IntegratorConfig ic = integrator_from_config(cfg);
  ic.validate(model);
  const FpeConfig fc = fpe_from_config(cfg);
  BridgeResult res;
  res.assumptions = require_assumptions(cfg, model);

  DensityField rho = initial_density(cfg);
  res.h_u = rho.grid.h_u();
  res.h_v = rho.grid.h_v();
  Ensemble ens = sample_density(rho, cfg.get_size("integrator.N"), cfg.seed());
  auto checkpoints = cfg.get_list("experiment.checkpoints");
  std::sort(checkpoints.begin(), checkpoints.end());
  const std::size_t B = cfg.get_size("experiment.bootstrap");
  const std::uint64_t boot_seed = splitmix64(cfg.seed() ^ kBootstrapSalt);

  LyapunovMonitor pmon(res.assumptions.lambda1, res.assumptions.lambda2);
  LyapunovMonitor fmon(res.assumptions.lambda1, res.assumptions.lambda2);
  pmon.record(ens.time, particle_v(ens));
  fmon.record_mean(rho.time, rho.v_moment());
  res.diagnostics.push_back({rho.time, rho.total_mass(), rho.boundary_mass(), rho.v_moment(), 0, 0, 0.0});
  res.snapshots.push_back(rho);
  res.max_boundary_mass = rho.boundary_mass();

  auto compare = [&](double t) {
    BridgeCheckpoint c;
    c.t = t;
    std::vector<double> us(ens.u_data().begin(), ens.u_data().end());
    std::vector<double> vs(ens.v_data().begin(), ens.v_data().end());
    c.w1_u = w1_marginal_1d(marginal_u(rho), Distribution1D::atoms(us));
    c.w1_v = w1_marginal_1d(marginal_v(rho), Distribution1D::atoms(vs));
    c.fluct_u = bootstrap_fluctuation(us, B, boot_seed);
    c.fluct_v = bootstrap_fluctuation(vs, B, boot_seed + 1);
    res.checkpoints.push_back(c);
  };

  double t_now = 0.0;
  std::uint64_t fpe_steps = 0;
  for (double target : checkpoints) {
    if (target < t_now) throw ConfigError("experiment.checkpoints must be non-negative");
    const std::uint64_t np = step_count(target - t_now, ic.dt);
    const std::uint64_t nf = step_count(target - t_now, fc.dt);
    for (std::uint64_t s = 0; s < np; ++s) {
      step(ens, model, ic);
      pmon.record(ens.time, particle_v(ens));
    }
    for (std::uint64_t s = 0; s < nf; ++s) {
      FpeStepInfo info;
      rho = fpe_step(rho, model, fc, &info);
      ++fpe_steps;
      rho.time = fc.dt * static_cast<double>(fpe_steps);
      res.max_mass_defect = std::max(res.max_mass_defect, info.mass_defect);
      res.max_boundary_mass = std::max(res.max_boundary_mass, rho.boundary_mass());
      fmon.record_mean(rho.time, rho.v_moment());
      res.diagnostics.push_back({rho.time, rho.total_mass(), rho.boundary_mass(), rho.v_moment(),
                                 info.picard_iterations, info.clipped_cells, info.mass_defect});
    }
    t_now = target;
    ens.time = target;
    res.snapshots.push_back(rho);
    compare(target);
  }
  res.particle_lyapunov_flags = pmon.flags().size();
  res.fpe_lyapunov_flags = fmon.flags().size();

  if (cfg.get_bool("experiment.stationary_check")) {
    if (model.kernel.kind == KernelKind::tanh || model.potential.kind == PotentialKind::tanh ||
        model.sigma.kind != SigmaKind::constant || !(model.gamma > 0.0))
      throw ConfigError("stationary check needs a linear model with gamma > 0");
    const double stiffness = model.basis.eigenvalue(0) +
                             (model.potential.kind == PotentialKind::linear ? model.potential.strength : 0.0) +
                             (model.kernel.kind == KernelKind::linear ? model.kernel.strength : 0.0);
    const double s2 = model.sigma.s0 * model.sigma.s0;
    const DensityField stat =
        gaussian_density(rho.grid, {0.0, 0.0}, {s2 / (2.0 * model.gamma * stiffness), 0.0,
                                                 s2 / (2.0 * model.gamma * model.epsilon)});
    const auto trace = fpe_run(stat, model, fc, cfg.get_double("fpe.T"), 0);
    res.stationary_l1 = l1_distance(trace.snapshots.back(), stat);
    for (const auto& d : trace.diagnostics) res.max_mass_defect = std::max(res.max_mass_defect, d.mass_defect);
  }

  if (!res.checkpoints.empty()) {
    const auto& c = res.checkpoints.back();
    const double lim_u = 3.0 * c.fluct_u + res.h_u;
    const double lim_v = 3.0 * c.fluct_v + res.h_v;
    res.checks.push_back(make_check("u-marginal W1 at t=" + fmt(c.t), c.w1_u <= lim_u, describe(c.w1_u, "<=", lim_u)));
    res.checks.push_back(make_check("v-marginal W1 at t=" + fmt(c.t), c.w1_v <= lim_v, describe(c.w1_v, "<=", lim_v)));
  }
  res.checks.push_back(make_check("fpe mass per step", res.max_mass_defect <= 1e-12,
                                  describe(res.max_mass_defect, "<=", 1e-12)));
  if (res.stationary_l1 >= 0.0)
    res.checks.push_back(make_check("stationary gaussian L1", res.stationary_l1 <= 0.02,
                                    describe(res.stationary_l1, "<=", 0.02)));
  res.checks.push_back(make_check("fpe boundary mass", res.max_boundary_mass < 1e-6,
                                  describe(res.max_boundary_mass, "<", 1e-6)));
  res.checks.push_back(lyapunov_check(res.particle_lyapunov_flags + res.fpe_lyapunov_flags));
  return res;
}

FpeRunResult exp_fpe(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  if (model.modes() != 1) throw ConfigError("fpe needs galerkin.modes = 1");
  const FpeConfig fc = fpe_from_config(cfg);
  FpeRunResult res;
  res.assumptions = try_assumptions(cfg, model);
  res.trace = fpe_run(initial_density(cfg), model, fc, cfg.get_double("fpe.T"), cfg.get_size("fpe.snapshot_every"));
  double defect = 0.0;
  for (const auto& d : res.trace.diagnostics) defect = std::max(defect, d.mass_defect);
  res.checks.push_back(make_check("fpe mass per step", defect <= 1e-12, describe(defect, "<=", 1e-12)));
  if (res.assumptions) {
    LyapunovMonitor mon(res.assumptions->lambda1, res.assumptions->lambda2);
    for (const auto& d : res.trace.diagnostics) mon.record_mean(d.t, d.v_moment);
    res.lyapunov_flags = mon.flags().size();
    res.checks.push_back(lyapunov_check(res.lyapunov_flags));
  }
  return res;
}

// ---------------------------------------------------------------------------

TestFunction adjoint_terminal_function(const RunConfig& cfg) {
  const double r = cfg.get_double("experiment.psi_radius");
  if (!(r > 0.0)) throw ConfigError("experiment.psi_radius must be positive");
  return make_unit_lipschitz_bump({cfg.get_double("experiment.psi_center_u"), cfg.get_double("experiment.psi_center_v")},
                                  r);
}

AdjointResult exp_adjoint(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  const std::size_t m = model.modes();
  const IntegratorConfig ic = integrator_from_config(cfg);
  ic.validate(model);
  AdjointResult res;
  res.assumptions = require_assumptions(cfg, model);
  const TestFunction psi = adjoint_terminal_function(cfg);
  res.cert = gradient_bound_cert(res.assumptions, psi);
  const SupNorms norms = sup_norms(psi);
  res.psi_max = norms.value;
  res.psi_grad_max = norms.gradient;

  const double t = cfg.get_double("experiment.t");
  const std::size_t every = std::max<std::size_t>(1, cfg.get_size("experiment.duality_every"));
  Ensemble ens0 = init_ensemble(initial_from_config(cfg), cfg.get_size("experiment.duality_N"), m, cfg.seed());
  std::vector<Ensemble> trajectory;
  AdjointProblem prob;
  prob.psi = psi;
  prob.t = t;
  prob.scheme = ic.scheme;
  prob.flow = FrozenFlow::record(ens0, model, ic, t, &trajectory, every);
  prob.validate();
  const LyapunovMonitor mon = lyapunov_track(trajectory, res.assumptions);

  const std::size_t n_probe = cfg.get_size("experiment.probes");
  const std::size_t n_samples = cfg.get_size("experiment.n_samples");
  const NoiseDriver draw(cfg.seed(), NoiseDomain::probes);
  const double steps = static_cast<double>(prob.flow.steps());
  const double radius = cfg.get_double("experiment.psi_radius");
  for (std::size_t p = 0; p < n_probe; ++p) {
    AdjointProbe probe;
    probe.s = prob.flow.dt() * std::floor(draw.uniform(p, 0, 0) * steps);
    const double ang = 2.0 * std::numbers::pi * draw.uniform(p, 1, 0);
    const double rad = 1.2 * radius * std::sqrt(draw.uniform(p, 2, 0));
    probe.z.u.assign(m, 0.0);
    probe.z.v.assign(m, 0.0);
    probe.z.u[0] = cfg.get_double("experiment.psi_center_u") + rad * std::cos(ang);
    probe.z.v[0] = cfg.get_double("experiment.psi_center_v") + rad * std::sin(ang);
    for (std::size_t k = 1; k < m; ++k) {
      probe.z.u[k] = 0.1 * draw.normal(p, static_cast<std::uint32_t>(2 * k), 0);
      probe.z.v[k] = 0.1 * draw.normal(p, static_cast<std::uint32_t>(2 * k + 1), 0);
    }
    const std::uint64_t seed = repetition_seed(cfg.seed(), 1000 + p);
    probe.f = solve_fk(prob, probe.s, probe.z, n_samples, seed, model);
    probe.grad = grad_fk(prob, probe.s, probe.z, n_samples, seed, model);
    res.probes.push_back(std::move(probe));
  }
  res.duality = duality_check(prob, trajectory, cfg.get_size("experiment.duality_samples"),
                              splitmix64(cfg.seed() ^ kDualitySalt), model);

  double worst_f = -1e300;
  double worst_g = -1e300;
  for (const auto& p : res.probes) {
    worst_f = std::max(worst_f, std::abs(p.f.mean) - res.psi_max - 3.0 * p.f.stderr);
    worst_g = std::max(worst_g, p.grad.norm - res.cert.c_tilde - 3.0 * p.grad.norm_stderr);
  }
  res.checks.push_back(make_check("|f| <= max|psi| + 3 se", worst_f <= 0.0, "worst slack " + fmt(worst_f)));
  res.checks.push_back(make_check("|grad f| <= C~ + 3 se", worst_g <= 0.0,
                                  "worst slack " + fmt(worst_g) + ", C~ = " + fmt(res.cert.c_tilde)));
  res.checks.push_back(make_check("duality trace within budget", res.duality.within_budget(),
                                  "max deviation " + fmt(res.duality.max_deviation) + ", worst slack " +
                                      fmt(res.duality.worst_slack)));
  res.checks.push_back(lyapunov_check(mon.flags().size()));
  return res;
}

// ---------------------------------------------------------------------------

ValidateResult exp_validate(const RunConfig& cfg) {
  const ModelSpec model = model_from_config(cfg);
  const std::size_t m = model.modes();
  ValidateResult res;
  res.assumptions = require_assumptions(cfg, model);
  const auto& a = res.assumptions;
  res.checks.push_back(make_check("declared constants cover estimates",
                                  a.estimated_L_K <= 1.01 * a.L_K + 1e-12 &&
                                      a.estimated_L_psi <= 1.01 * a.L_psi + 1e-12 &&
                                      a.estimated_L_sigma <= 1.01 * a.L_sigma + 1e-12,
                                  "L_K " + fmt(a.estimated_L_K) + "/" + fmt(a.L_K) + ", L_psi " +
                                      fmt(a.estimated_L_psi) + "/" + fmt(a.L_psi) + ", L_sigma " +
                                      fmt(a.estimated_L_sigma) + "/" + fmt(a.L_sigma)));

  // One-sided Lipschitz bound of the nonlinear drift with rho frozen at delta_0,
  // and ellipticity of the v-block diffusion, on seeded probes.
  const std::size_t probes = cfg.get_size("model.probe_count");
  const NoiseDriver draw(cfg.seed(), NoiseDomain::probes);
  const EmpiricalMeasure delta0(m, std::vector<double>(m, 0.0));
  const KernelConvolver conv(model.kernel, delta0, false);
  double worst_alpha = -1e300;
  double worst_theta = 1e300;
  std::vector<double> f1(m), f2(m), sig(m);
  for (std::size_t p = 0; p < probes; ++p) {
    PhasePoint z1, z2;
    z1.u.resize(m);
    z1.v.resize(m);
    z2.u.resize(m);
    z2.v.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto j = static_cast<std::uint32_t>(4 * k);
      z1.u[k] = 3.0 * draw.normal(p, j, 1);
      z1.v[k] = 3.0 * draw.normal(p, j + 1, 1);
      z2.u[k] = 3.0 * draw.normal(p, j + 2, 1);
      z2.v[k] = 3.0 * draw.normal(p, j + 3, 1);
    }
    total_force(z1.u, conv, model, f1);
    total_force(z2.u, conv, model, f2);
    double inner = 0.0;
    double dist = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      inner += (f1[k] - f2[k]) / model.epsilon * (z1.v[k] - z2.v[k]);
      dist += (z1.u[k] - z2.u[k]) * (z1.u[k] - z2.u[k]) + (z1.v[k] - z2.v[k]) * (z1.v[k] - z2.v[k]);
    }
    if (dist > 0.0) worst_alpha = std::max(worst_alpha, inner / dist);
    model.sigma.apply(z1.u, sig);
    for (double s : sig) worst_theta = std::min(worst_theta, 0.5 * s * s / (model.epsilon * model.epsilon));
  }
  res.checks.push_back(make_check("one-sided Lipschitz drift", worst_alpha <= a.alpha * (1.0 + 1e-9) + 1e-12,
                                  describe(worst_alpha, "<=", a.alpha)));
  res.checks.push_back(make_check("v-block ellipticity", worst_theta >= a.theta * (1.0 - 1e-9),
                                  describe(worst_theta, ">=", a.theta)));
  return res;
}

}  // namespace mfk
