#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mfk {

/// Atomic probability measure on R^dim. Atoms are stored row-major; an empty
/// weight vector means uniform weights 1/size.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  EmpiricalMeasure(std::size_t dim, std::vector<double> atoms);
  EmpiricalMeasure(std::size_t dim, std::vector<double> atoms, std::vector<double> weights);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : atoms_.size() / dim_; }
  bool empty() const noexcept { return size() == 0; }
  bool uniform() const noexcept { return weights_.empty(); }

  std::span<const double> atom(std::size_t j) const { return {atoms_.data() + j * dim_, dim_}; }
  double weight(std::size_t j) const { return weights_.empty() ? 1.0 / static_cast<double>(size()) : weights_[j]; }
  std::span<const double> atoms() const noexcept { return atoms_; }

  /// Weighted mean, computed with a fixed-order tree reduction.
  std::vector<double> mean() const;
  /// M1 = sum_j w_j |z_j|.
  double first_moment() const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

enum class W1Method { exact_matching, sliced };

std::string to_string(W1Method method);

/// Wasserstein-1 value tagged with the estimator that produced it.
struct W1Report {
  double value = 0.0;
  W1Method method = W1Method::exact_matching;
  std::size_t n_projections = 0;  // sliced only
  double stat_error = 0.0;        // sliced only
};

inline constexpr std::size_t kDefaultExactCap = 512;
inline constexpr std::size_t kDefaultProjections = 128;

/// Exact W1 between equal-size uniform measures as a min-cost perfect
/// matching (Euclidean ground cost), solved by shortest augmenting paths.
/// Throws InvalidArgument for unequal sizes, non-uniform weights or N > cap.
W1Report w1_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                  std::size_t cap = kDefaultExactCap);

/// Minimum-cost assignment for a dense n x n cost matrix (row-major).
/// Returns the column assigned to each row.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

/// Exact 1D W1 between two weighted point sets.
double w1_1d(std::span<const double> x, std::span<const double> wx,
             std::span<const double> y, std::span<const double> wy);

/// Random unit directions with a fixed seed; each projection z -> <theta, z>
/// is 1-Lipschitz, so the max of the projected 1D distances is a lower bound
/// of W1.
class SlicedProjector {
 public:
  SlicedProjector(std::size_t dim, std::size_t n_projections, std::uint64_t seed);

  /// Sorted projected samples with their weights, one block per direction.
  struct Projected {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> weights;
  };

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return directions_.size() / dim_; }
  std::span<const double> direction(std::size_t p) const { return {directions_.data() + p * dim_, dim_}; }

  Projected project(const EmpiricalMeasure& mu) const;
  /// max_p W1_1d(<theta_p, mu>, <theta_p, nu>); the reduction order is fixed.
  double distance(const Projected& a, const Projected& b) const;

 private:
  std::size_t dim_;
  std::vector<double> directions_;
};

/// Sliced lower-bound estimate of W1 with a bootstrap standard error.
W1Report w1_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   std::size_t n_projections, std::uint64_t seed,
                   std::size_t n_bootstrap = 16);

/// W1 report for whichever method the sizes admit: exact when both measures
/// are uniform, equally sized and at most `cap` atoms, sliced otherwise.
W1Report w1_auto(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::uint64_t seed,
                 std::size_t cap = kDefaultExactCap,
                 std::size_t n_projections = kDefaultProjections);

/// One-dimensional distribution: weighted atoms, or a histogram whose cell
/// mass is spread uniformly across the cell.
class Distribution1D {
 public:
  static Distribution1D atoms(std::vector<double> points, std::vector<double> weights = {});
  static Distribution1D histogram(std::vector<double> edges, std::vector<double> masses);

  bool is_histogram() const noexcept { return histogram_; }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double total_mass() const;
  double mean() const;

  /// CDF value at x (right-continuous for atoms).
  double cdf(double x) const;
  /// CDF limit from the left.
  double cdf_left(double x) const;

 private:
  bool histogram_ = false;
  std::vector<double> points_;   // sorted atoms, or histogram edges
  std::vector<double> weights_;  // atom weights, or cell masses
  std::vector<double> cumulative_;
};

/// Exact W1 = integral |F - G| dx. Throws InvalidArgument unless both inputs
/// have unit mass to 1e-10.
double w1_marginal_1d(const Distribution1D& f, const Distribution1D& g);

/// V(z) = 1 + |z|^2 for each atom.
std::vector<double> lyapunov_values(const EmpiricalMeasure& mu);

/// Tracks the V-moment along a run and flags discrete growth beyond
/// Lambda1 + Lambda2 * v_mean + 3 stderr.
class LyapunovMonitor {
 public:
  LyapunovMonitor(double lambda1, double lambda2);

  /// Per-atom V values at time t; atoms must keep their identity across calls.
  void record(double t, std::span<const double> per_atom_v);
  /// Deterministic trace (grid solvers): no statistical slack.
  void record_mean(double t, double v_mean);

  double lambda1() const noexcept { return lambda1_; }
  double lambda2() const noexcept { return lambda2_; }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& v_mean() const noexcept { return v_mean_; }
  const std::vector<double>& v_stderr() const noexcept { return v_stderr_; }
  /// Indices k such that the step from k-1 to k exceeded the bound.
  const std::vector<std::size_t>& flags() const noexcept { return flags_; }
  /// Largest observed (rate - allowed rate); negative when never violated.
  double worst_margin() const noexcept { return worst_margin_; }

 private:
  void check_step(double rate, double rate_stderr);

  double lambda1_;
  double lambda2_;
  std::vector<double> times_;
  std::vector<double> v_mean_;
  std::vector<double> v_stderr_;
  std::vector<double> last_values_;
  std::vector<std::size_t> flags_;
  double worst_margin_ = -1e300;
};

}  // namespace mfk
