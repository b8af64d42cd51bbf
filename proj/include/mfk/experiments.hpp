#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfk/adjoint.hpp"
#include "mfk/config.hpp"
#include "mfk/fpe.hpp"
#include "mfk/measure.hpp"
#include "mfk/model.hpp"
#include "mfk/particles.hpp"

namespace mfk {

/// One pass/fail verdict of an experiment.
struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

bool all_passed(const std::vector<Check>& checks);

/// Derived constants written into every run's metadata.
std::map<std::string, double> constants_map(const ModelAssumptions& a);

/// Seed of repetition r of a sweep (r = 0 is the master seed itself).
std::uint64_t repetition_seed(std::uint64_t master, std::uint64_t r);

// ---------------------------------------------------------------------------
// Lyapunov bookkeeping shared by the particle experiments

/// V values of every particle.
std::vector<double> particle_v(const Ensemble& ens);

/// Runs ens over T, recording the V-moment after every step and handing
/// every `snapshot_every`-th state (and the initial one) to `observer`.
LyapunovMonitor run_monitored(Ensemble& ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                              std::size_t snapshot_every, const ModelAssumptions& a,
                              const SnapshotObserver& observer = {});

/// V-moment monitor over a stored trajectory.
LyapunovMonitor lyapunov_track(const std::vector<Ensemble>& trajectory, const ModelAssumptions& a);

struct EquicontinuityReport {
  double constant = 0.0;     // C(Lambda1, Lambda2, phi)
  double moment_bound = 0.0;  // V-moment bound fed into the constant
  double worst_slack = 0.0;   // max over pairs of |diff| - C|t - s| - 6 se
  std::size_t pairs = 0;
  bool passed() const noexcept { return worst_slack <= 0.0; }
};

/// Checks |int phi dGamma_t - int phi dGamma_s| <= C |t - s| + 6 se over all
/// pairs of the given snapshots; the moment bound is the largest observed
/// V-moment plus three standard errors.
EquicontinuityReport check_equicontinuity(const std::vector<Ensemble>& snapshots, const TestFunction& phi,
                                          const ModelSpec& model, const ModelAssumptions& a);

// ---------------------------------------------------------------------------
// particles

struct ParticleRunResult {
  Ensemble final_state;
  LyapunovMonitor monitor{0.0, 0.0};
  std::optional<ModelAssumptions> assumptions;
  std::vector<Check> checks;
};

/// Initial ensemble from the [initial] section, run over integrator.T.
ParticleRunResult exp_particles(const RunConfig& cfg, const SnapshotObserver& observer = {});

// ---------------------------------------------------------------------------
// mean-field convergence

struct ConvergenceRow {
  std::size_t n = 0;
  std::size_t repetitions = 0;
  double mean = 0.0;
  double stderr = 0.0;
  W1Method method = W1Method::sliced;
  std::vector<double> values;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;  // sorted by N
  W1Method method = W1Method::sliced;
  std::string reference;
  std::size_t n_ref = 0;
  double split_half = 0.0;  // W1 between the two halves of the reference sample
  double t = 0.0;
  std::size_t lyapunov_flags = 0;
  ModelAssumptions assumptions;
  std::vector<Check> checks;
};

/// Reference sample of mu_t with n atoms (analytic Gaussian, FPE grid or a
/// large independent particle run).
EmpiricalMeasure reference_sample(const RunConfig& cfg, std::size_t n, std::uint64_t seed);
std::uint64_t reference_seed(const RunConfig& cfg);

/// Particle empirical measure at experiment.t for the given N and seed. With
/// assumptions given, the run is V-monitored and its flag count added to
/// `flags`.
EmpiricalMeasure particle_sample(const RunConfig& cfg, std::size_t n, std::uint64_t seed,
                                 const ModelAssumptions* a = nullptr, std::size_t* flags = nullptr);

ConvergenceTable exp_meanfield_convergence(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// stability

struct StabilityResult {
  std::vector<double> t;
  std::vector<double> ratio;         // coupling cost / delta0, an upper bound of the W1 ratio
  std::vector<double> ratio_sliced;  // sliced lower bound / delta0
  std::vector<double> bound;         // exp(C t)
  double delta0 = 0.0;
  double rate = 0.0;
  bool identical = false;
  bool identical_bitwise = false;  // identical-input control pair stayed bit-identical
  std::size_t lyapunov_flags = 0;
  std::optional<ModelAssumptions> assumptions;
  std::vector<Check> checks;
};

/// Coupled ensembles: B is A shifted by (experiment.shift_u, shift_v), so
/// W1(mu_0, nu_0) equals the shift norm.
StabilityResult exp_stability(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// weak-form residual

struct ResidualLevel {
  std::size_t n = 0;
  double dt = 0.0;
  std::vector<double> mean_max_residual;  // per test function
  std::vector<double> stderr;
};

struct WeakResidualResult {
  std::vector<ResidualLevel> levels;
  std::vector<std::vector<double>> ratios;  // [level - 1][phi]
  std::vector<EquicontinuityReport> equicontinuity;  // per phi, finest level, first repetition
  std::size_t lyapunov_flags = 0;
  ModelAssumptions assumptions;
  std::vector<Check> checks;
};

std::vector<TestFunction> residual_test_functions(const RunConfig& cfg);

/// R(phi, t_n) = int phi dGamma_t - int phi dGamma_0 - trapezoid sum of
/// int L phi dGamma_s ds, at every step of the run; returns max_n |R|.
std::vector<double> max_weak_residual(Ensemble ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                                      const std::vector<TestFunction>& phis, LyapunovMonitor* monitor = nullptr,
                                      std::vector<Ensemble>* snapshots = nullptr, std::size_t stride = 1);

/// (1/N) sum_i L_Gamma phi(z_i), skipping particles outside phi's support.
double mean_generator(const TestFunction& phi, const Ensemble& ens, const ModelSpec& model,
                      const KernelConvolver& conv);

WeakResidualResult exp_weak_residual(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Galerkin bridge

struct BridgeCheckpoint {
  double t = 0.0;
  double w1_u = 0.0;
  double w1_v = 0.0;
  double fluct_u = 0.0;
  double fluct_v = 0.0;
};

struct BridgeResult {
  std::vector<BridgeCheckpoint> checkpoints;
  double h_u = 0.0;
  double h_v = 0.0;
  double max_mass_defect = 0.0;
  double max_boundary_mass = 0.0;
  double stationary_l1 = -1.0;  // negative when not run
  std::size_t fpe_lyapunov_flags = 0;
  std::size_t particle_lyapunov_flags = 0;
  std::vector<FpeDiagnostics> diagnostics;
  std::vector<DensityField> snapshots;
  ModelAssumptions assumptions;
  std::vector<Check> checks;
};

/// N i.i.d. draws from a grid density: a cell by its mass, then uniform
/// within the cell.
Ensemble sample_density(const DensityField& rho, std::size_t n, std::uint64_t seed);

/// Mean W1 between bootstrap resamples of `points` and `points` itself.
double bootstrap_fluctuation(std::span<const double> points, std::size_t resamples, std::uint64_t seed);

BridgeResult exp_galerkin_bridge(const RunConfig& cfg);

/// Initial FPE density from the [initial] section (Gaussian, m = 1).
DensityField initial_density(const RunConfig& cfg);

struct FpeRunResult {
  FpeTrace trace;
  std::optional<ModelAssumptions> assumptions;
  std::size_t lyapunov_flags = 0;
  std::vector<Check> checks;
};

FpeRunResult exp_fpe(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// adjoint

struct AdjointProbe {
  double s = 0.0;
  PhasePoint z;
  FeynmanKacEstimate f;
  GradientEstimate grad;
};

struct AdjointResult {
  GradientBoundCert cert;
  double psi_max = 0.0;
  double psi_grad_max = 0.0;
  std::vector<AdjointProbe> probes;
  DualityReport duality;
  ModelAssumptions assumptions;
  std::vector<Check> checks;
};

/// Unit-Lipschitz radial bump at (experiment.psi_center_u, psi_center_v).
TestFunction adjoint_terminal_function(const RunConfig& cfg);

AdjointResult exp_adjoint(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// validate

struct ValidateResult {
  ModelAssumptions assumptions;
  std::vector<Check> checks;
};

ValidateResult exp_validate(const RunConfig& cfg);

}  // namespace mfk
