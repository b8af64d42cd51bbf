#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfk/model.hpp"
#include "mfk/particles.hpp"

namespace mfk {

/// Time-dependent mean-field drift recorded from a forward run: step n of
/// length dt uses the convolver of the u-marginal at time n dt.
class FrozenFlow {
 public:
  FrozenFlow() = default;
  FrozenFlow(double dt, std::vector<KernelConvolver> steps);

  /// Runs `ens` forward for T and freezes the u-marginal at every step.
  /// Snapshots (every `snapshot_every` steps, plus the initial state) are
  /// appended to `trajectory` when given.
  static FrozenFlow record(Ensemble ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                           std::vector<Ensemble>* trajectory = nullptr, std::size_t snapshot_every = 1);

  double dt() const noexcept { return dt_; }
  std::size_t steps() const noexcept { return steps_.size(); }
  double horizon() const noexcept { return dt_ * static_cast<double>(steps_.size()); }
  const KernelConvolver& at(std::size_t n) const { return steps_.at(n); }

 private:
  double dt_ = 0.0;
  std::vector<KernelConvolver> steps_;
};

/// Backward problem d_s f + L_mu f = 0 on [0, t], f(t) = psi, with mu frozen.
struct AdjointProblem {
  TestFunction psi;
  double t = 0.0;
  FrozenFlow flow;
  /// Integrator used for the sample paths; defaults match the forward run.
  Scheme scheme = Scheme::splitting;

  /// Throws InvalidArgument if the flow does not cover [0, t] or t is not a
  /// multiple of the flow step.
  void validate() const;
};

struct FeynmanKacEstimate {
  double mean = 0.0;
  double stderr = 0.0;
  std::size_t n_samples = 0;
  /// Sample variance of psi(Z_t) across paths.
  double variance = 0.0;
};

/// f(s, z) = E[psi(Z_t) | Z_s = z] by Monte Carlo over n_samples paths.
/// Path j at step n uses the noise counter (j, mode, n), so two calls with
/// the same seed share their random numbers.
FeynmanKacEstimate solve_fk(const AdjointProblem& prob, double s, const PhasePoint& z, std::size_t n_samples,
                            std::uint64_t seed, const ModelSpec& model);

struct GradientEstimate {
  std::vector<double> grad;    // length 2m, (u block, v block)
  std::vector<double> stderr;  // per component
  double norm = 0.0;
  double norm_stderr = 0.0;  // delta-method standard error of |grad|
  std::size_t n_samples = 0;
};

/// Central differences of solve_fk in each of the 2m coordinates with common
/// random numbers.
GradientEstimate grad_fk(const AdjointProblem& prob, double s, const PhasePoint& z, std::size_t n_samples,
                         std::uint64_t seed, const ModelSpec& model, double h = 1e-3);

struct GradientBoundCert {
  double theta = 0.0;
  double varpi = 0.0;
  double alpha_tilde = 0.0;
  double c = 0.0;      // Young constant, c = 2 theta
  double kappa = 0.0;  // (varpi / c + 2 alpha_tilde) / (2 theta)
  double c_tilde = 0.0;  // sqrt(max(|grad psi|^2 + kappa psi^2))
};

/// Throws AssumptionViolation("H1") when theta = 0.
GradientBoundCert gradient_bound_cert(const ModelAssumptions& a, const TestFunction& psi);

struct DualityPoint {
  double s = 0.0;
  double I = 0.0;
  double stderr = 0.0;
};

struct DualityReport {
  std::vector<DualityPoint> trace;
  double I_t = 0.0;
  double max_deviation = 0.0;  // max_s |I(s) - I(t)|
  /// Allowed deviation 3 sqrt(se_fk^2 + se_ens^2) + max|psi| dt, at the s
  /// of largest deviation.
  double budget = 0.0;
  double worst_s = 0.0;
  /// max_s (|I(s) - I(t)| - allowed(s)).
  double worst_slack = 0.0;
  bool within_budget() const noexcept { return worst_slack <= 0.0; }
};

/// I(s) = integral f(s, .) d mu_s over the recorded snapshots. The snapshot
/// at time t gives I(t) = integral psi d mu_t exactly.
DualityReport duality_check(const AdjointProblem& prob, const std::vector<Ensemble>& mu_trajectory,
                            std::size_t n_samples, std::uint64_t seed, const ModelSpec& model);

}  // namespace mfk
