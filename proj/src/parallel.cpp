#include "mfk/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace mfk {

namespace {

constexpr std::size_t kLeaf = 64;

double tree_sum_strided(const double* data, std::size_t n, std::size_t stride) {
  if (n <= kLeaf) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += data[i * stride];
    return acc;
  }
  const std::size_t half = n / 2;
  return tree_sum_strided(data, half, stride) + tree_sum_strided(data + half * stride, n - half, stride);
}

}  // namespace

double tree_sum(std::span<const double> values) {
  return tree_sum_strided(values.data(), values.size(), 1);
}

std::vector<double> tree_sum_rows(std::span<const double> values, std::size_t cols) {
  std::vector<double> out(cols, 0.0);
  if (cols == 0) return out;
  const std::size_t rows = values.size() / cols;
  for (std::size_t c = 0; c < cols; ++c) out[c] = tree_sum_strided(values.data() + c, rows, cols);
  return out;
}

double snap_to_grid(double t, double dt) {
  const double k = std::round(t / dt);
  const double g = k * dt;
  return std::abs(t - g) <= 1e-9 * dt ? g : t;
}

int effective_workers(int requested) { return std::max(1, requested); }

}  // namespace mfk
