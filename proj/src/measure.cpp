#include "mfk/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mfk/error.hpp"
#include "mfk/noise.hpp"
#include "mfk/parallel.hpp"

namespace mfk {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> atoms)
    : dim_(dim), atoms_(std::move(atoms)) {
  if (dim_ == 0) throw InvalidArgument("EmpiricalMeasure: dim must be positive");
  if (atoms_.size() % dim_ != 0) throw InvalidArgument("EmpiricalMeasure: atom buffer not a multiple of dim");
}

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> atoms, std::vector<double> weights)
    : EmpiricalMeasure(dim, std::move(atoms)) {
  if (weights.size() != size()) throw InvalidArgument("EmpiricalMeasure: one weight per atom required");
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("EmpiricalMeasure: negative weight");
  }
  if (std::abs(tree_sum(weights) - 1.0) > 1e-12) {
    throw InvalidArgument("EmpiricalMeasure: weights must sum to 1");
  }
  weights_ = std::move(weights);
}

std::vector<double> EmpiricalMeasure::mean() const {
  if (empty()) throw InvalidArgument("EmpiricalMeasure::mean: empty measure");
  if (uniform()) {
    auto sums = tree_sum_rows(atoms_, dim_);
    for (double& s : sums) s /= static_cast<double>(size());
    return sums;
  }
  std::vector<double> weighted(atoms_.size());
  for (std::size_t j = 0; j < size(); ++j) {
    for (std::size_t d = 0; d < dim_; ++d) weighted[j * dim_ + d] = weights_[j] * atoms_[j * dim_ + d];
  }
  return tree_sum_rows(weighted, dim_);
}

double EmpiricalMeasure::first_moment() const {
  std::vector<double> terms(size());
  for (std::size_t j = 0; j < size(); ++j) {
    double r2 = 0.0;
    for (double x : atom(j)) r2 += x * x;
    terms[j] = weight(j) * std::sqrt(r2);
  }
  return tree_sum(terms);
}

std::string to_string(W1Method method) {
  return method == W1Method::exact_matching ? "exact-matching" : "sliced";
}

// ---------------------------------------------------------------------------
// Exact matching

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw InvalidArgument("solve_assignment: cost must be n x n");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Shortest augmenting paths with row/column potentials; 1-based with a
  // virtual column 0.
  std::vector<double> pot_row(n + 1, 0.0), pot_col(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - pot_row[i0] - pot_col[j];
        if (cur < min_slack[j]) {
          min_slack[j] = cur;
          way[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          pot_row[match[j]] += delta;
          pot_col[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

W1Report w1_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t cap) {
  if (mu.size() != nu.size()) throw InvalidArgument("w1_exact: atom counts differ; use w1_sliced");
  if (mu.dim() != nu.dim()) throw InvalidArgument("w1_exact: dimension mismatch");
  if (!mu.uniform() || !nu.uniform()) throw InvalidArgument("w1_exact: uniform weights required");
  if (mu.size() > cap) throw InvalidArgument("w1_exact: atom count above the exact cap; use w1_sliced");
  const std::size_t n = mu.size();
  W1Report report;
  report.method = W1Method::exact_matching;
  if (n == 0) return report;
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = mu.atom(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto b = nu.atom(j);
      double r2 = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) r2 += (a[d] - b[d]) * (a[d] - b[d]);
      cost[i * n + j] = std::sqrt(r2);
    }
  }
  const auto assignment = solve_assignment(cost, n);
  std::vector<double> matched(n);
  for (std::size_t i = 0; i < n; ++i) matched[i] = cost[i * n + assignment[i]];
  report.value = tree_sum(matched) / static_cast<double>(n);
  return report;
}

// ---------------------------------------------------------------------------
// One-dimensional transport

namespace {

struct SortedSample {
  std::vector<double> x;
  std::vector<double> w;
};

SortedSample sort_sample(std::span<const double> x, std::span<const double> w) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  SortedSample s;
  s.x.resize(x.size());
  s.w.resize(x.size());
  const double uniform = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    s.x[i] = x[order[i]];
    s.w[i] = w.empty() ? uniform : w[order[i]];
  }
  return s;
}

// Both inputs sorted ascending. Sweeps the merged support and integrates the
// piecewise-constant |F - G|.
double w1_sorted(std::span<const double> x, std::span<const double> wx,
                 std::span<const double> y, std::span<const double> wy) {
  if (x.size() == y.size() && !x.empty()) {
    bool equal_uniform = true;
    const double w0 = wx[0];
    for (std::size_t i = 0; i < x.size() && equal_uniform; ++i) {
      equal_uniform = wx[i] == w0 && wy[i] == w0;
    }
    if (equal_uniform) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - y[i]);
      return acc * w0;
    }
  }
  std::size_t i = 0, j = 0;
  double fx = 0.0, fy = 0.0, acc = 0.0;
  double prev = std::min(x.empty() ? 0.0 : x[0], y.empty() ? 0.0 : y[0]);
  while (i < x.size() || j < y.size()) {
    const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
    acc += std::abs(fx - fy) * (next - prev);
    while (i < x.size() && x[i] == next) fx += wx[i++];
    while (j < y.size() && y[j] == next) fy += wy[j++];
    prev = next;
  }
  return acc;
}

}  // namespace

double w1_1d(std::span<const double> x, std::span<const double> wx,
             std::span<const double> y, std::span<const double> wy) {
  if (x.empty() || y.empty()) throw InvalidArgument("w1_1d: empty sample");
  const auto sx = sort_sample(x, wx);
  const auto sy = sort_sample(y, wy);
  return w1_sorted(sx.x, sx.w, sy.x, sy.w);
}

// ---------------------------------------------------------------------------
// Sliced estimator

SlicedProjector::SlicedProjector(std::size_t dim, std::size_t n_projections, std::uint64_t seed)
    : dim_(dim) {
  if (n_projections < 1) throw InvalidArgument("w1_sliced: n_projections must be >= 1");
  if (dim == 0) throw InvalidArgument("w1_sliced: dim must be positive");
  const NoiseDriver rng(seed, NoiseDomain::projections);
  directions_.resize(n_projections * dim);
  for (std::size_t p = 0; p < n_projections; ++p) {
    double r2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double g = rng.normal(p, static_cast<std::uint32_t>(d), 0);
      directions_[p * dim + d] = g;
      r2 += g * g;
    }
    const double inv = 1.0 / std::sqrt(r2);
    for (std::size_t d = 0; d < dim; ++d) directions_[p * dim + d] *= inv;
  }
}

SlicedProjector::Projected SlicedProjector::project(const EmpiricalMeasure& mu) const {
  if (mu.dim() != dim_) throw InvalidArgument("w1_sliced: dimension mismatch");
  if (mu.empty()) throw InvalidArgument("w1_sliced: empty measure");
  Projected out;
  out.values.resize(size());
  out.weights.resize(size());
  std::vector<double> proj(mu.size()), w(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) w[j] = mu.weight(j);
  for (std::size_t p = 0; p < size(); ++p) {
    const auto theta = direction(p);
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const auto a = mu.atom(j);
      double s = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) s += theta[d] * a[d];
      proj[j] = s;
    }
    auto sorted = sort_sample(proj, w);
    out.values[p] = std::move(sorted.x);
    out.weights[p] = std::move(sorted.w);
  }
  return out;
}

double SlicedProjector::distance(const Projected& a, const Projected& b) const {
  double best = 0.0;
  for (std::size_t p = 0; p < size(); ++p) {
    best = std::max(best, w1_sorted(a.values[p], a.weights[p], b.values[p], b.weights[p]));
  }
  return best;
}

namespace {

EmpiricalMeasure resample(const EmpiricalMeasure& mu, const NoiseDriver& rng, std::uint64_t replicate,
                          std::uint32_t which) {
  const std::size_t n = mu.size();
  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) cumulative[j] = (acc += mu.weight(j));
  std::vector<double> atoms(n * mu.dim());
  for (std::size_t j = 0; j < n; ++j) {
    const double u = rng.uniform(replicate, which, j) * acc;
    std::size_t pick = static_cast<std::size_t>(std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    pick = std::min(pick, n - 1);
    const auto a = mu.atom(pick);
    std::copy(a.begin(), a.end(), atoms.begin() + static_cast<std::ptrdiff_t>(j * mu.dim()));
  }
  return EmpiricalMeasure(mu.dim(), std::move(atoms));
}

}  // namespace

W1Report w1_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   std::size_t n_projections, std::uint64_t seed, std::size_t n_bootstrap) {
  if (mu.dim() != nu.dim()) throw InvalidArgument("w1_sliced: dimension mismatch");
  const SlicedProjector projector(mu.dim(), n_projections, seed);
  W1Report report;
  report.method = W1Method::sliced;
  report.n_projections = n_projections;
  report.value = projector.distance(projector.project(mu), projector.project(nu));
  if (n_bootstrap >= 2) {
    const NoiseDriver rng(seed, NoiseDomain::bootstrap);
    std::vector<double> reps(n_bootstrap);
    for (std::size_t b = 0; b < n_bootstrap; ++b) {
      reps[b] = projector.distance(projector.project(resample(mu, rng, b, 0)),
                                   projector.project(resample(nu, rng, b, 1)));
    }
    const double m = tree_sum(reps) / static_cast<double>(n_bootstrap);
    double ss = 0.0;
    for (double r : reps) ss += (r - m) * (r - m);
    report.stat_error = std::sqrt(ss / static_cast<double>(n_bootstrap - 1));
  }
  return report;
}

W1Report w1_auto(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::uint64_t seed,
                 std::size_t cap, std::size_t n_projections) {
  if (mu.size() == nu.size() && mu.uniform() && nu.uniform() && mu.size() <= cap) {
    return w1_exact(mu, nu, cap);
  }
  return w1_sliced(mu, nu, n_projections, seed);
}

// ---------------------------------------------------------------------------
// Distribution1D

Distribution1D Distribution1D::atoms(std::vector<double> points, std::vector<double> weights) {
  if (points.empty()) throw InvalidArgument("Distribution1D: no atoms");
  if (!weights.empty() && weights.size() != points.size()) {
    throw InvalidArgument("Distribution1D: one weight per atom required");
  }
  auto sorted = sort_sample(points, weights);
  Distribution1D d;
  d.histogram_ = false;
  d.points_ = std::move(sorted.x);
  d.weights_ = std::move(sorted.w);
  d.cumulative_.resize(d.weights_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < d.weights_.size(); ++i) d.cumulative_[i] = (acc += d.weights_[i]);
  return d;
}

Distribution1D Distribution1D::histogram(std::vector<double> edges, std::vector<double> masses) {
  if (edges.size() != masses.size() + 1 || masses.empty()) {
    throw InvalidArgument("Distribution1D: histogram needs cells + 1 edges");
  }
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i + 1] > edges[i])) throw InvalidArgument("Distribution1D: edges must increase");
  }
  for (double m : masses) {
    if (!(m >= 0.0)) throw InvalidArgument("Distribution1D: negative cell mass");
  }
  Distribution1D d;
  d.histogram_ = true;
  d.points_ = std::move(edges);
  d.weights_ = std::move(masses);
  d.cumulative_.resize(d.weights_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < d.weights_.size(); ++i) d.cumulative_[i] = (acc += d.weights_[i]);
  return d;
}

double Distribution1D::total_mass() const { return tree_sum(weights_); }

double Distribution1D::mean() const {
  std::vector<double> terms(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const double x = histogram_ ? 0.5 * (points_[i] + points_[i + 1]) : points_[i];
    terms[i] = weights_[i] * x;
  }
  return tree_sum(terms) / total_mass();
}

double Distribution1D::cdf(double x) const {
  if (!histogram_) {
    const auto it = std::upper_bound(points_.begin(), points_.end(), x);
    const auto k = static_cast<std::size_t>(it - points_.begin());
    return k == 0 ? 0.0 : cumulative_[k - 1];
  }
  if (x <= points_.front()) return 0.0;
  if (x >= points_.back()) return cumulative_.back();
  const auto it = std::upper_bound(points_.begin(), points_.end(), x);
  const auto cell = static_cast<std::size_t>(it - points_.begin()) - 1;
  const double before = cell == 0 ? 0.0 : cumulative_[cell - 1];
  const double frac = (x - points_[cell]) / (points_[cell + 1] - points_[cell]);
  return before + frac * weights_[cell];
}

double Distribution1D::cdf_left(double x) const {
  if (histogram_) return cdf(x);
  const auto it = std::lower_bound(points_.begin(), points_.end(), x);
  const auto k = static_cast<std::size_t>(it - points_.begin());
  return k == 0 ? 0.0 : cumulative_[k - 1];
}

double w1_marginal_1d(const Distribution1D& f, const Distribution1D& g) {
  for (const auto* d : {&f, &g}) {
    if (std::abs(d->total_mass() - 1.0) > 1e-10) {
      throw InvalidArgument("w1_marginal_1d: input not normalized");
    }
  }
  std::vector<double> breaks;
  breaks.reserve(f.points().size() + g.points().size());
  breaks.insert(breaks.end(), f.points().begin(), f.points().end());
  breaks.insert(breaks.end(), g.points().begin(), g.points().end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  // Between consecutive breakpoints both CDFs are affine, so |F - G| is
  // integrated exactly, including a sign change inside the interval.
  std::vector<double> pieces(breaks.size() > 0 ? breaks.size() - 1 : 0);
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k], b = breaks[k + 1];
    const double d0 = f.cdf(a) - g.cdf(a);
    const double d1 = f.cdf_left(b) - g.cdf_left(b);
    const double len = b - a;
    if ((d0 >= 0.0) == (d1 >= 0.0)) {
      pieces[k] = 0.5 * len * (std::abs(d0) + std::abs(d1));
    } else {
      pieces[k] = 0.5 * len * (d0 * d0 + d1 * d1) / (std::abs(d0) + std::abs(d1));
    }
  }
  return tree_sum(pieces);
}

// ---------------------------------------------------------------------------
// Lyapunov monitor

std::vector<double> lyapunov_values(const EmpiricalMeasure& mu) {
  std::vector<double> out(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) {
    double r2 = 0.0;
    for (double x : mu.atom(j)) r2 += x * x;
    out[j] = 1.0 + r2;
  }
  return out;
}

LyapunovMonitor::LyapunovMonitor(double lambda1, double lambda2) : lambda1_(lambda1), lambda2_(lambda2) {}

void LyapunovMonitor::check_step(double rate, double rate_stderr) {
  const double allowed = lambda1_ + lambda2_ * v_mean_[v_mean_.size() - 2] + 3.0 * rate_stderr;
  const double margin = rate - allowed;
  worst_margin_ = std::max(worst_margin_, margin);
  if (margin > 0.0) flags_.push_back(v_mean_.size() - 1);
}

void LyapunovMonitor::record(double t, std::span<const double> per_atom_v) {
  if (per_atom_v.empty()) throw InvalidArgument("LyapunovMonitor: empty snapshot");
  const double n = static_cast<double>(per_atom_v.size());
  const double mean = tree_sum(per_atom_v) / n;
  double ss = 0.0;
  for (double x : per_atom_v) ss += (x - mean) * (x - mean);
  times_.push_back(t);
  v_mean_.push_back(mean);
  v_stderr_.push_back(per_atom_v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0);
  if (times_.size() >= 2 && last_values_.size() == per_atom_v.size()) {
    const double dt = t - times_[times_.size() - 2];
    if (dt > 0.0) {
      std::vector<double> diff(per_atom_v.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (per_atom_v[i] - last_values_[i]) / dt;
      const double rate = tree_sum(diff) / n;
      double sd = 0.0;
      for (double d : diff) sd += (d - rate) * (d - rate);
      const double rate_stderr = diff.size() > 1 ? std::sqrt(sd / (n - 1.0) / n) : 0.0;
      check_step(rate, rate_stderr);
    }
  }
  last_values_.assign(per_atom_v.begin(), per_atom_v.end());
}

void LyapunovMonitor::record_mean(double t, double v_mean) {
  times_.push_back(t);
  v_mean_.push_back(v_mean);
  v_stderr_.push_back(0.0);
  last_values_.clear();
  if (times_.size() >= 2) {
    const double dt = t - times_[times_.size() - 2];
    if (dt > 0.0) check_step((v_mean - v_mean_[v_mean_.size() - 2]) / dt, 0.0);
  }
}

}  // namespace mfk
