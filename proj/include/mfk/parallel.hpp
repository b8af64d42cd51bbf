#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mfk {

/// Pairwise (tree) summation with a fixed block structure. The result depends
/// only on the input order, never on how work was split across threads.
double tree_sum(std::span<const double> values);

/// Column-wise tree sum of a row-major `rows x cols` array.
std::vector<double> tree_sum_rows(std::span<const double> values, std::size_t cols);

/// t rounded to the nearest multiple of dt when within 1e-9 dt of it; keeps
/// clocks advanced by repeated addition on the step grid.
double snap_to_grid(double t, double dt);

/// Number of workers actually used for a requested count (0 means 1).
int effective_workers(int requested);

}  // namespace mfk
