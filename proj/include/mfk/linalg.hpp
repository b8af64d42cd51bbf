#pragma once

#include <array>

namespace mfk {

/// Row-major 2x2 matrix.
using Mat2 = std::array<double, 4>;

Mat2 mat2_mul(const Mat2& a, const Mat2& b) noexcept;

/// exp(M) for a real 2x2 matrix via the trace/discriminant closed form.
Mat2 expm2(const Mat2& m) noexcept;

/// Propagator of the per-mode linear block over a time step:
/// exp(dt [[0, 1], [-lambda/eps, -gamma/eps]]).
Mat2 kinetic_propagator(double lambda, double gamma, double epsilon, double dt) noexcept;

}  // namespace mfk
