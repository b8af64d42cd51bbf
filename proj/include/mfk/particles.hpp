#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfk/galerkin.hpp"
#include "mfk/linalg.hpp"
#include "mfk/measure.hpp"
#include "mfk/model.hpp"
#include "mfk/noise.hpp"

namespace mfk {

enum class InitialKind { point_mass, gaussian, two_cluster };

/// Law of the initial particle states. Gaussians are diagonal over the (u, v)
/// coefficients; the two-cluster mixture puts weight `cluster_weight` on
/// mean + offset and the rest on mean - offset, with the same covariance.
struct InitialDistribution {
  InitialKind kind = InitialKind::point_mass;
  PhasePoint mean;
  std::vector<double> var_u;
  std::vector<double> var_v;
  PhasePoint offset;
  double cluster_weight = 0.5;

  static InitialDistribution point_mass(PhasePoint z0);
  static InitialDistribution gaussian(PhasePoint mean, std::vector<double> var_u, std::vector<double> var_v);
  static InitialDistribution two_cluster(PhasePoint mean, PhasePoint offset, std::vector<double> var_u,
                                         std::vector<double> var_v, double cluster_weight = 0.5);

  /// Throws InvalidArgument for wrong lengths, negative variances or a
  /// weight outside [0, 1].
  void validate(std::size_t m) const;
};

enum class Scheme { splitting, euler_maruyama };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct IntegratorConfig {
  double dt = 1e-3;
  Scheme scheme = Scheme::splitting;
  /// Worker threads for the per-particle loop; 0 uses the OpenMP default.
  std::size_t workers = 0;
  /// Allow the mean-only path for kernels that admit one.
  bool fast_path = true;

  /// Throws InvalidArgument unless dt > 0 and dt * gamma / eps < 10.
  void validate(const ModelSpec& model) const;
};

/// N particles with a simulation clock and a noise driver. Coordinates are
/// stored row-major (N x m) for u and v separately.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(std::size_t n, std::size_t m, NoiseDriver noise);

  std::size_t size() const noexcept { return n_; }
  std::size_t modes() const noexcept { return m_; }

  std::span<double> u(std::size_t i) { return {u_.data() + i * m_, m_}; }
  std::span<double> v(std::size_t i) { return {v_.data() + i * m_, m_}; }
  std::span<const double> u(std::size_t i) const { return {u_.data() + i * m_, m_}; }
  std::span<const double> v(std::size_t i) const { return {v_.data() + i * m_, m_}; }
  std::span<const double> u_data() const noexcept { return u_; }
  std::span<const double> v_data() const noexcept { return v_; }

  PhasePoint point(std::size_t i) const;
  void set_point(std::size_t i, const PhasePoint& z);

  double time = 0.0;
  /// Absolute step counter; the noise for a step is keyed by it.
  std::uint64_t step_index = 0;
  NoiseDriver noise;
  /// Noise stream used by particle i; defaults to i.
  std::vector<std::uint64_t> streams;
  std::string model_ref;

  /// Empirical measure on (u, v) in R^{2m}.
  EmpiricalMeasure empirical() const;
  /// u-marginal in R^m.
  EmpiricalMeasure u_marginal() const;
  /// Empirical measure of (u_1..u_m', v_1..v_m').
  EmpiricalMeasure reduced(std::size_t based_modes) const;

  friend bool operator==(const Ensemble& a, const Ensemble& b);

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<double> u_;
  std::vector<double> v_;
};

/// N i.i.d. draws from `dist`; the dynamics noise is keyed by the same seed.
Ensemble init_ensemble(const InitialDistribution& dist, std::size_t n, std::size_t m, std::uint64_t seed);

/// Advances the ensemble by one step in place. Throws NumericalFailure
/// naming the step and particle on a non-finite state.
void step(Ensemble& ens, const ModelSpec& model, const IntegratorConfig& cfg);

/// Per-particle total force F(u_i, Gamma^N) at the current state.
std::vector<double> ensemble_forces(const Ensemble& ens, const ModelSpec& model, bool fast_path = true);

using SnapshotObserver = std::function<void(const Ensemble&)>;

/// Number of steps n with n dt = T; throws unless T is an integer multiple of
/// dt to 1e-9 relative.
std::uint64_t step_count(double T, double dt);

/// Applies step n = T/dt times. The observer sees the initial state and every
/// `snapshot_every`-th state, i.e. floor(n / snapshot_every) + 1 snapshots.
void run(Ensemble& ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
         std::size_t snapshot_every, const SnapshotObserver& observer);

/// Same, collecting the snapshots.
std::vector<Ensemble> run(Ensemble ens, const ModelSpec& model, const IntegratorConfig& cfg, double T,
                          std::size_t snapshot_every);

/// Two ensembles driven by identical noise increments per (stream, mode, step).
struct CoupledPair {
  Ensemble a;
  Ensemble b;
};

/// Rebinds b to a's noise driver, streams and clock. Throws InvalidArgument
/// on shape mismatch.
CoupledPair couple(Ensemble a, Ensemble b);

void step(CoupledPair& pair, const ModelSpec& model, const IntegratorConfig& cfg);

/// (1/N) sum_i |z_i^A - z_i^B|: the cost of the index coupling, an upper
/// bound of W1 between the two empirical measures.
double coupling_cost(const CoupledPair& pair);

}  // namespace mfk
