#include "mfk/linalg.hpp"

#include <cmath>

namespace mfk {

Mat2 mat2_mul(const Mat2& a, const Mat2& b) noexcept {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

Mat2 expm2(const Mat2& m) noexcept {
  // exp(M) = e^{tau/2} [ c I + s (M - tau/2 I) ], with c, s functions of
  // disc = tau^2/4 - det.
  const double half_tau = 0.5 * (m[0] + m[3]);
  const double det = m[0] * m[3] - m[1] * m[2];
  const double disc = half_tau * half_tau - det;
  double c, s;
  if (std::abs(disc) < 1e-6) {
    c = 1.0 + disc * (0.5 + disc * (1.0 / 24.0 + disc / 720.0));
    s = 1.0 + disc * (1.0 / 6.0 + disc * (1.0 / 120.0 + disc / 5040.0));
  } else if (disc > 0.0) {
    const double q = std::sqrt(disc);
    c = std::cosh(q);
    s = std::sinh(q) / q;
  } else {
    const double q = std::sqrt(-disc);
    c = std::cos(q);
    s = std::sin(q) / q;
  }
  const double e = std::exp(half_tau);
  return {e * (c + s * (m[0] - half_tau)), e * s * m[1], e * s * m[2],
          e * (c + s * (m[3] - half_tau))};
}

Mat2 kinetic_propagator(double lambda, double gamma, double epsilon, double dt) noexcept {
  return expm2({0.0, dt, -dt * lambda / epsilon, -dt * gamma / epsilon});
}

}  // namespace mfk
