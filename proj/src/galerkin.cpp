#include "mfk/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mfk/error.hpp"

namespace mfk {

GalerkinBasis::GalerkinBasis(double box_length, std::size_t mode_count, bool free_transport)
    : box_length_(box_length), free_transport_(free_transport) {
  if (!(box_length > 0.0) || !std::isfinite(box_length)) {
    throw InvalidArgument("galerkin: box_length must be positive and finite");
  }
  if (mode_count == 0) {
    throw InvalidArgument("galerkin: mode_count must be at least 1");
  }
  eigenvalues_.resize(mode_count, 0.0);
  if (!free_transport) {
    for (std::size_t k = 0; k < mode_count; ++k) {
      const double w = static_cast<double>(k + 1) * std::numbers::pi / box_length;
      eigenvalues_[k] = w * w;
    }
  }
}

double GalerkinBasis::lambda_max() const noexcept {
  return *std::max_element(eigenvalues_.begin(), eigenvalues_.end());
}

FieldCoeffs laplacian_apply(std::span<const double> u, const GalerkinBasis& basis) {
  if (u.size() != basis.modes()) {
    throw InvalidArgument("laplacian_apply: expected " + std::to_string(basis.modes()) +
                          " coefficients, got " + std::to_string(u.size()));
  }
  FieldCoeffs out(u.size());
  const auto lam = basis.eigenvalues();
  for (std::size_t k = 0; k < u.size(); ++k) out[k] = -lam[k] * u[k];
  return out;
}

FieldCoeffs project(std::span<const double> u, std::size_t n) {
  if (n < 1 || n > u.size()) {
    throw InvalidArgument("project: n must lie in [1, " + std::to_string(u.size()) + "]");
  }
  return FieldCoeffs(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(n));
}

double eval_physical(std::span<const double> u, double x, double box_length) {
  if (!(x >= 0.0 && x <= box_length)) {
    throw InvalidArgument("eval_physical: x outside [0, L]");
  }
  const double scale = std::sqrt(2.0 / box_length);
  double acc = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    acc += u[k] * std::sin(static_cast<double>(k + 1) * std::numbers::pi * x / box_length);
  }
  return scale * acc;
}

double norm2(std::span<const double> u) {
  double acc = 0.0;
  for (double x : u) acc += x * x;
  return acc;
}

double PhasePoint::norm2() const { return mfk::norm2(u) + mfk::norm2(v); }

}  // namespace mfk
