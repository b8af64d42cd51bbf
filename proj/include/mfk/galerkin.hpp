#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mfk {

/// Coefficients of a field u = sum_k u_k e_k in the sine basis.
using FieldCoeffs = std::vector<double>;

/// Dirichlet sine basis e_k(x) = sqrt(2/L) sin(k pi x / L) on [0, L].
///
/// The Laplacian is diagonal in this basis with eigenvalues -lambda_k,
/// lambda_k = (k pi / L)^2. With `free_transport` set, every lambda_k is
/// replaced by zero; that mode only exists to expose closed-form
/// trajectories in tests.
class GalerkinBasis {
 public:
  GalerkinBasis(double box_length, std::size_t mode_count, bool free_transport = false);

  double box_length() const noexcept { return box_length_; }
  std::size_t modes() const noexcept { return eigenvalues_.size(); }
  bool free_transport() const noexcept { return free_transport_; }

  /// Effective lambda_k used by the dynamics (zero in free-transport mode).
  std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
  double eigenvalue(std::size_t k) const { return eigenvalues_.at(k); }
  double lambda_max() const noexcept;

 private:
  double box_length_;
  bool free_transport_;
  std::vector<double> eigenvalues_;
};

/// (Delta u)_k = -lambda_k u_k.
FieldCoeffs laplacian_apply(std::span<const double> u, const GalerkinBasis& basis);

/// Orthogonal projection onto the first n modes.
FieldCoeffs project(std::span<const double> u, std::size_t n);

/// Physical-space value sum_k u_k sqrt(2/L) sin(k pi x / L).
double eval_physical(std::span<const double> u, double x, double box_length);

double norm2(std::span<const double> u);

/// Particle state z = (u, v).
struct PhasePoint {
  FieldCoeffs u;
  FieldCoeffs v;

  std::size_t modes() const noexcept { return u.size(); }
  /// |z|^2 = |u|^2 + |v|^2.
  double norm2() const;
  /// Lyapunov weight V(z) = 1 + |z|^2.
  double lyapunov() const { return 1.0 + norm2(); }
};

}  // namespace mfk
