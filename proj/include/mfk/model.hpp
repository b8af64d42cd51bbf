#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfk/galerkin.hpp"
#include "mfk/measure.hpp"

namespace mfk {

// Named primitives. Every primitive acts componentwise on the coefficient
// vector and vanishes at the origin.

/// Interaction kernel: K(w) = -kappa w (linear) or -kappa tanh(w) (tanh).
enum class KernelKind { zero, linear, tanh };
/// Potential gradient: grad Psi(u) = -a u (linear) or -a tanh(u) (tanh).
enum class PotentialKind { zero, linear, tanh };
/// Diagonal noise: sigma_kk = s0 (constant) or s0 + s1 (1 + tanh u_k) / 2.
enum class SigmaKind { constant, tanh };

struct Kernel {
  KernelKind kind = KernelKind::zero;
  double strength = 0.0;

  void apply(std::span<const double> w, std::span<double> out) const;
  double lipschitz() const noexcept;
};

struct Potential {
  PotentialKind kind = PotentialKind::zero;
  double strength = 0.0;

  void apply(std::span<const double> u, std::span<double> out) const;
  double lipschitz() const noexcept;
};

struct Sigma {
  SigmaKind kind = SigmaKind::constant;
  double s0 = 1.0;
  double s1 = 0.0;

  void apply(std::span<const double> u, std::span<double> diag) const;
  double s_min() const noexcept { return s0; }
  double s_max() const noexcept { return kind == SigmaKind::constant ? s0 : s0 + s1; }
  /// Hilbert-Schmidt Lipschitz constant of u -> diag(sigma(u)).
  double lipschitz() const noexcept { return kind == SigmaKind::constant ? 0.0 : 0.5 * s1; }
  /// sup |d sigma_kk / d u_k|.
  double derivative_bound() const noexcept { return lipschitz(); }
};

/// Dynamics data: du = v dt, eps dv = (Delta u - gamma v + grad Psi(u) + K*rho(u)) dt + sigma(u) dW.
struct ModelSpec {
  std::string name = "custom";
  GalerkinBasis basis{1.0, 1};
  double gamma = 1.0;
  double epsilon = 1.0;
  Kernel kernel;
  Potential potential;
  Sigma sigma;
  bool builtin = false;

  /// Declared constants for custom models; when absent the primitive's own
  /// constant is declared.
  std::optional<double> declared_L_sigma;
  std::optional<double> declared_L_K;
  std::optional<double> declared_L_psi;

  std::size_t modes() const noexcept { return basis.modes(); }
  /// Throws InvalidArgument on negative gamma, non-positive epsilon or negative sigma.
  /// sigma0 = 0 is accepted for deterministic runs; validate_assumptions
  /// rejects it as an H1 violation.
  void validate() const;
};

/// K(w) = -kappa w, grad Psi(u) = -a u, constant sigma.
ModelSpec make_linear_model(const GalerkinBasis& basis, double kappa, double a, double gamma,
                            double sigma, double epsilon = 1.0);

/// Componentwise tanh kernel and potential with state-dependent bounded sigma.
ModelSpec make_saturated_model(const GalerkinBasis& basis, double kappa_b, double b, double gamma,
                               double s0, double s1, double epsilon = 1.0);

/// Evaluates (K * rho)(u) = sum_j w_j K(u - u_j). On the fast path the linear
/// kernel collapses onto the mean of rho, and the tanh kernel reuses cached
/// tanh values of the atoms through the subtraction formula.
class KernelConvolver {
 public:
  KernelConvolver() = default;
  KernelConvolver(const Kernel& kernel, const EmpiricalMeasure& rho, bool use_fast_path = true);
  /// Linear or zero kernel only: the measure enters through its mean.
  static KernelConvolver from_mean(const Kernel& kernel, std::vector<double> mean);

  std::size_t dim() const noexcept { return dim_; }
  bool fast_path() const noexcept { return fast_; }
  const std::vector<double>& mean() const noexcept { return mean_; }

  void apply(std::span<const double> u, std::span<double> out) const;
  /// out += (K * rho)(u).
  void add_to(std::span<const double> u, std::span<double> out) const;

 private:
  Kernel kernel_;
  std::size_t dim_ = 0;
  bool fast_ = false;
  std::vector<double> mean_;
  EmpiricalMeasure rho_;
  std::vector<double> tanh_atoms_;
};

/// (K * rho)(u), using the mean-field fast path when the kernel admits one.
FieldCoeffs kernel_convolve(std::span<const double> u, const EmpiricalMeasure& rho, const Kernel& kernel);
/// Direct O(M) summation, never taking a fast path.
FieldCoeffs kernel_convolve_direct(std::span<const double> u, const EmpiricalMeasure& rho, const Kernel& kernel);

/// F(u, rho) = grad Psi(u) + (K * rho)(u), written into `out`.
void total_force(std::span<const double> u, const KernelConvolver& conv, const ModelSpec& model,
                 std::span<double> out);

/// (v, (Delta u - gamma v + F(u, rho)) / eps). Throws NumericalFailure naming
/// the offending term when any piece is non-finite.
PhasePoint drift_full(const PhasePoint& z, const KernelConvolver& conv, const ModelSpec& model);
PhasePoint drift_full(const PhasePoint& z, const EmpiricalMeasure& rho, const ModelSpec& model);

/// Finitely based test function of (u_1..u_m', v_1..v_m') with analytic
/// first and second derivatives.
struct TestFunction {
  std::size_t based_modes = 1;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  /// Row-major (2m') x (2m') Hessian.
  std::function<void(std::span<const double>, std::span<double>)> hessian;
  /// Ball containing the support, in reduced coordinates (radius 0: unknown).
  std::vector<double> support_center;
  double support_radius = 0.0;
  /// Optional exact scan over (|phi|, |grad phi|) samples, used for sup norms.
  std::function<void(const std::function<void(double, double)>&)> scan;

  std::size_t based_dim() const noexcept { return 2 * based_modes; }
};

/// (u_1..u_m', v_1..v_m') of a phase point.
std::vector<double> reduced_coordinates(const PhasePoint& z, std::size_t based_modes);

/// L_rho phi(z) = Tr(Q(z) D^2 phi) + <A z + B(z, rho), D phi>; the second
/// order part only touches the v-block.
double generator_apply(const TestFunction& phi, const PhasePoint& z, const KernelConvolver& conv,
                       const ModelSpec& model);
double generator_apply(const TestFunction& phi, const PhasePoint& z, const EmpiricalMeasure& rho,
                       const ModelSpec& model);

/// L_rho V(z) for V = 1 + |z|^2: 2 <z, drift> + 2 Tr(Q_v).
double lyapunov_rate(const PhasePoint& z, const KernelConvolver& conv, const ModelSpec& model);
double lyapunov_rate(const PhasePoint& z, const EmpiricalMeasure& rho, const ModelSpec& model);

/// Declared and derived constants of a model.
struct ModelAssumptions {
  double L_sigma = 0.0;
  double L_K = 0.0;
  double L_psi = 0.0;
  double theta = 0.0;   // ellipticity of the v-block diffusion (1/2) sigma sigma^T / eps^2
  double alpha = 0.0;   // one-sided Lipschitz constant of the nonlinear drift
  /// One-sided bound <J z', z'> <= alpha_tilde |z'|^2 for the Jacobian J of the
  /// whole frozen drift A z + B(z), linear block included.
  double alpha_tilde = 0.0;
  double varpi = 0.0;   // bound on |grad Tr Q(z)|
  double lambda1 = 0.0;
  double lambda2 = 0.0;  // ensemble-level: integral L V drho <= lambda1 + lambda2 integral V drho
  /// Pointwise form: L_rho V(z) <= lambda1 + lambda2_pointwise V(z) + lambda_rho (1 + integral |u|^2 drho).
  double lambda2_pointwise = 0.0;
  double lambda_rho = 0.0;
  double s_min = 0.0;
  double s_max = 0.0;
  /// max_k |1 - lambda_k / eps| / 2: symmetric-part bound of the linear block.
  double linear_spectral_bound = 0.0;
  /// Synchronous-coupling growth rate: r(t) <= exp(C t).
  double coupling_rate = 0.0;

  double estimated_L_sigma = 0.0;
  double estimated_L_K = 0.0;
  double estimated_L_psi = 0.0;
};

/// Declared constants plus seeded empirical Lipschitz ratios. Throws
/// AssumptionViolation("H1"/"H2"/"H3") when an estimated ratio exceeds the
/// declared constant by more than 1%.
ModelAssumptions validate_assumptions(const ModelSpec& model, std::size_t probe_count, std::uint64_t seed);

/// Right-hand side of the pointwise Lyapunov bound.
double lyapunov_bound(const ModelAssumptions& a, const PhasePoint& z, const EmpiricalMeasure& u_marginal);

/// C(Lambda, phi) with |int phi dmu_t - int phi dmu_s| <= C |t - s| for a
/// solution whose V-moment stays below `moment_bound`; sup over the support
/// is taken on `samples` seeded points.
double equicontinuity_constant(const TestFunction& phi, const ModelSpec& model, const ModelAssumptions& a,
                               double moment_bound, std::size_t samples = 20000, std::uint64_t seed = 7);

/// Gaussian law of one mode (u_k, v_k): mean and covariance (uu, uv, vv).
struct GaussianMode {
  std::array<double, 2> mean{};
  std::array<double, 3> cov{};
};

/// Exact law at time t of the mean-field limit of a model with linear (or
/// zero) kernel and potential and constant sigma, started from independent
/// per-mode Gaussians. The mean follows the potential alone; fluctuations feel
/// the kernel as an extra restoring force. Needs gamma > 0.
std::vector<GaussianMode> linear_gaussian_law(const ModelSpec& model, const PhasePoint& mean0,
                                              std::span<const double> var_u0, std::span<const double> var_v0,
                                              double t);

}  // namespace mfk
