#include "mfk/fpe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfk/error.hpp"
#include "mfk/parallel.hpp"

namespace mfk {

std::vector<double> PhaseGrid::u_edges() const {
  std::vector<double> e(n_u + 1);
  for (std::size_t i = 0; i <= n_u; ++i) e[i] = -R_u + static_cast<double>(i) * h_u();
  return e;
}

std::vector<double> PhaseGrid::v_edges() const {
  std::vector<double> e(n_v + 1);
  for (std::size_t j = 0; j <= n_v; ++j) e[j] = -R_v + static_cast<double>(j) * h_v();
  return e;
}

void PhaseGrid::validate() const {
  if (!(R_u > 0.0) || !(R_v > 0.0)) throw InvalidArgument("grid: ranges must be positive");
  if (n_u < 4 || n_v < 4) throw InvalidArgument("grid: need at least 4 cells per direction");
}

double DensityField::total_mass() const { return tree_sum(mass); }

double DensityField::boundary_mass() const {
  const std::size_t nu = grid.n_u, nv = grid.n_v;
  std::vector<double> ring;
  ring.reserve(2 * (nu + nv));
  for (std::size_t i = 0; i < nu; ++i) {
    for (std::size_t j = 0; j < nv; ++j) {
      if (i == 0 || j == 0 || i + 1 == nu || j + 1 == nv) ring.push_back(at(i, j));
    }
  }
  return tree_sum(ring);
}

double DensityField::v_moment() const {
  std::vector<double> w(mass.size());
  for (std::size_t i = 0; i < grid.n_u; ++i) {
    const double u = grid.u_center(i);
    for (std::size_t j = 0; j < grid.n_v; ++j) {
      const double v = grid.v_center(j);
      w[i * grid.n_v + j] = at(i, j) * (1.0 + u * u + v * v);
    }
  }
  return tree_sum(w);
}

double DensityField::mean_u() const {
  std::vector<double> w(grid.n_u);
  for (std::size_t i = 0; i < grid.n_u; ++i) {
    w[i] = grid.u_center(i) * tree_sum(std::span<const double>(mass.data() + i * grid.n_v, grid.n_v));
  }
  return tree_sum(w);
}

DensityField gaussian_density(const PhaseGrid& grid, std::array<double, 2> mean, std::array<double, 3> cov) {
  grid.validate();
  const double suu = cov[0], suv = cov[1], svv = cov[2];
  const double det = suu * svv - suv * suv;
  if (!(suu > 0.0) || !(svv > 0.0) || !(det > 0.0)) throw InvalidArgument("gaussian_density: covariance not positive definite");
  DensityField rho{grid, std::vector<double>(grid.n_u * grid.n_v), 0.0};
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  const double hu = grid.h_u(), hv = grid.h_v();
  for (std::size_t i = 0; i < grid.n_u; ++i) {
    for (std::size_t j = 0; j < grid.n_v; ++j) {
      double acc = 0.0;
      for (int a = -1; a <= 1; ++a) {
        for (int b = -1; b <= 1; ++b) {
          const double du = grid.u_center(i) + a * hu / 3.0 - mean[0];
          const double dv = grid.v_center(j) + b * hv / 3.0 - mean[1];
          const double q = (svv * du * du - 2.0 * suv * du * dv + suu * dv * dv) / det;
          acc += norm * std::exp(-0.5 * q);
        }
      }
      rho.at(i, j) = acc / 9.0 * grid.cell_area();
    }
  }
  const double total = rho.total_mass();
  for (double& m : rho.mass) m /= total;
  return rho;
}

double l1_distance(const DensityField& a, const DensityField& b) {
  if (a.mass.size() != b.mass.size()) throw InvalidArgument("l1_distance: grids differ");
  std::vector<double> d(a.mass.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = std::abs(a.mass[k] - b.mass[k]);
  return tree_sum(d);
}

void FpeConfig::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("fpe: dt must be positive");
  if (!(picard_tol > 0.0)) throw InvalidArgument("fpe: picard_tol must be positive");
  if (picard_max_iter == 0) throw InvalidArgument("fpe: picard_max_iter must be positive");
  if (!(cfl > 0.0 && cfl <= 0.5)) throw InvalidArgument("fpe: cfl must lie in (0, 0.5]");
}

namespace {

// Conservative finite-volume advection of cell masses along one line with
// face speeds a[0..n] (a[0] = a[n] = 0 closes the walls). SSP-RK2 in time,
// sub-cycled so that each substep respects the Courant bound.
class LineAdvector {
 public:
  LineAdvector(std::size_t n, Limiter lim, double cfl) : n_(n), lim_(lim), cfl_(cfl), x_(n), y_(n), rate_(n), flux_(n + 1) {}

  void apply(double* data, std::size_t stride, const std::vector<double>& a, double dt, double h) {
    double amax = 0.0;
    for (double s : a) amax = std::max(amax, std::abs(s));
    if (amax == 0.0) return;
    const auto sub = static_cast<std::size_t>(std::ceil(amax * dt / h / cfl_ - 1e-12));
    const double tau = dt / static_cast<double>(std::max<std::size_t>(sub, 1));
    for (std::size_t j = 0; j < n_; ++j) x_[j] = data[j * stride];
    for (std::size_t s = 0; s < std::max<std::size_t>(sub, 1); ++s) {
      rates(x_, a, h);
      for (std::size_t j = 0; j < n_; ++j) y_[j] = x_[j] + tau * rate_[j];
      rates(y_, a, h);
      for (std::size_t j = 0; j < n_; ++j) x_[j] = 0.5 * x_[j] + 0.5 * (y_[j] + tau * rate_[j]);
    }
    for (std::size_t j = 0; j < n_; ++j) data[j * stride] = x_[j];
  }

 private:
  double slope(const std::vector<double>& x, std::size_t j) const {
    if (lim_ == Limiter::none) return 0.0;
    const double left = j == 0 ? 0.0 : x[j - 1];
    const double right = j + 1 == n_ ? 0.0 : x[j + 1];
    const double dm = x[j] - left, dp = right - x[j];
    const double prod = dm * dp;
    return prod > 0.0 ? 2.0 * prod / (dm + dp) : 0.0;
  }

  void rates(const std::vector<double>& x, const std::vector<double>& a, double h) {
    flux_[0] = 0.0;
    flux_[n_] = 0.0;
    for (std::size_t f = 1; f < n_; ++f) {
      const double s = a[f];
      if (s > 0.0) {
        flux_[f] = s * (x[f - 1] + 0.5 * slope(x, f - 1));
      } else if (s < 0.0) {
        flux_[f] = s * (x[f] - 0.5 * slope(x, f));
      } else {
        flux_[f] = 0.0;
      }
    }
    for (std::size_t j = 0; j < n_; ++j) rate_[j] = -(flux_[j + 1] - flux_[j]) / h;
  }

  std::size_t n_;
  Limiter lim_;
  double cfl_;
  std::vector<double> x_, y_, rate_, flux_;
};

void transport_u(DensityField& rho, const FpeConfig& cfg, double dt) {
  const PhaseGrid& g = rho.grid;
  const auto nv = static_cast<std::ptrdiff_t>(g.n_v);
#pragma omp parallel
  {
    LineAdvector adv(g.n_u, cfg.limiter, cfg.cfl);
    std::vector<double> a(g.n_u + 1);
#pragma omp for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < nv; ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      const double v = g.v_center(j);
      std::fill(a.begin(), a.end(), v);
      a.front() = 0.0;
      a.back() = 0.0;
      adv.apply(rho.mass.data() + j, g.n_v, a, dt, g.h_u());
    }
  }
}

void drift_v(DensityField& rho, const ModelSpec& model, const std::vector<double>& force, const FpeConfig& cfg,
             double dt) {
  const PhaseGrid& g = rho.grid;
  const double lam = model.basis.eigenvalue(0);
  const auto nu = static_cast<std::ptrdiff_t>(g.n_u);
#pragma omp parallel
  {
    LineAdvector adv(g.n_v, cfg.limiter, cfg.cfl);
    std::vector<double> a(g.n_v + 1);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < nu; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double u = g.u_center(i);
      for (std::size_t f = 1; f < g.n_v; ++f) {
        const double vf = -g.R_v + static_cast<double>(f) * g.h_v();
        a[f] = (-lam * u - model.gamma * vf + force[i]) / model.epsilon;
      }
      a.front() = 0.0;
      a.back() = 0.0;
      adv.apply(rho.mass.data() + i * g.n_v, 1, a, dt, g.h_v());
    }
  }
}

// Backward Euler for d_t m = D(u) d_vv m with zero-flux walls.
void diffuse_v(DensityField& rho, const ModelSpec& model, double dt) {
  const PhaseGrid& g = rho.grid;
  const std::size_t n = g.n_v;
  const auto nu = static_cast<std::ptrdiff_t>(g.n_u);
#pragma omp parallel
  {
    std::vector<double> c(n), d(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < nu; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double uu = g.u_center(i);
      double sig = 0.0;
      model.sigma.apply(std::span<const double>(&uu, 1), std::span<double>(&sig, 1));
      const double r = 0.5 * sig * sig / (model.epsilon * model.epsilon) * dt / (g.h_v() * g.h_v());
      double* m = rho.mass.data() + i * n;
      // Thomas algorithm; sub/super diagonals are -r, the diagonal is 1 + 2r
      // (1 + r at the walls).
      double b0 = 1.0 + r;
      c[0] = -r / b0;
      d[0] = m[0] / b0;
      for (std::size_t j = 1; j < n; ++j) {
        const double bj = (j + 1 == n ? 1.0 + r : 1.0 + 2.0 * r) + r * c[j - 1];
        c[j] = -r / bj;
        d[j] = (m[j] + r * d[j - 1]) / bj;
      }
      m[n - 1] = d[n - 1];
      for (std::size_t j = n - 1; j-- > 0;) m[j] = d[j] - c[j] * m[j + 1];
    }
  }
}

std::vector<double> u_marginal_masses(const DensityField& rho) {
  std::vector<double> w(rho.grid.n_u);
  for (std::size_t i = 0; i < rho.grid.n_u; ++i) {
    w[i] = tree_sum(std::span<const double>(rho.mass.data() + i * rho.grid.n_v, rho.grid.n_v));
  }
  return w;
}

}  // namespace

std::vector<double> fpe_force(const DensityField& rho, const ModelSpec& model) {
  const PhaseGrid& g = rho.grid;
  const std::vector<double> w = u_marginal_masses(rho);
  std::vector<double> centers(g.n_u);
  for (std::size_t i = 0; i < g.n_u; ++i) centers[i] = g.u_center(i);
  const double total = tree_sum(w);
  std::vector<double> weights(w);
  for (double& x : weights) x /= total;
  const EmpiricalMeasure marginal(1, centers, weights);
  const KernelConvolver conv(model.kernel, marginal, true);
  std::vector<double> force(g.n_u);
  for (std::size_t i = 0; i < g.n_u; ++i) {
    total_force(std::span<const double>(&centers[i], 1), conv, model, std::span<double>(&force[i], 1));
  }
  return force;
}

DensityField fpe_step(const DensityField& rho, const ModelSpec& model, const FpeConfig& cfg, FpeStepInfo* info) {
  cfg.validate();
  if (model.modes() != 1) throw InvalidArgument("fpe: the grid solver handles m = 1 only");
  for (double m : rho.mass) {
    if (!(m >= -1e-14)) throw NumericalFailure("fpe: negative or non-finite input cell mass at t = " + std::to_string(rho.time));
  }
  const double half = 0.5 * cfg.dt;
  DensityField after_u = rho;
  transport_u(after_u, cfg, half);

  std::vector<double> force = fpe_force(rho, model);
  const bool nonlinear = model.kernel.kind != KernelKind::zero;
  DensityField out, prev;
  FpeStepInfo local;
  for (std::size_t it = 1; it <= cfg.picard_max_iter; ++it) {
    out = after_u;
    drift_v(out, model, force, cfg, half);
    diffuse_v(out, model, cfg.dt);
    drift_v(out, model, force, cfg, half);
    transport_u(out, cfg, half);
    local.picard_iterations = it;
    if (!nonlinear) break;
    if (it > 1) {
      local.picard_residual = l1_distance(out, prev);
      if (local.picard_residual < cfg.picard_tol) break;
      if (it == cfg.picard_max_iter) {
        throw NumericalFailure("fpe: Picard iteration did not converge at t = " + std::to_string(rho.time) +
                               " (residual " + std::to_string(local.picard_residual) + ")");
      }
    }
    force = fpe_force(out, model);
    prev = out;
  }
  for (double& m : out.mass) {
    if (m < 0.0) {
      if (m < -1e-14) {
        throw NumericalFailure("fpe: negative cell mass " + std::to_string(m) + " at t = " + std::to_string(rho.time));
      }
      m = 0.0;
      ++local.clipped_cells;
    }
  }
  out.time = snap_to_grid(rho.time + cfg.dt, cfg.dt);
  local.mass_defect = std::abs(out.total_mass() - rho.total_mass());
  if (info) *info = local;
  return out;
}

Distribution1D marginal_u(const DensityField& rho) {
  std::vector<double> w = u_marginal_masses(rho);
  const double total = tree_sum(w);
  for (double& x : w) x /= total;
  return Distribution1D::histogram(rho.grid.u_edges(), std::move(w));
}

Distribution1D marginal_v(const DensityField& rho) {
  const PhaseGrid& g = rho.grid;
  std::vector<double> w(g.n_v);
  std::vector<double> column(g.n_u);
  for (std::size_t j = 0; j < g.n_v; ++j) {
    for (std::size_t i = 0; i < g.n_u; ++i) column[i] = rho.at(i, j);
    w[j] = tree_sum(column);
  }
  const double total = tree_sum(w);
  for (double& x : w) x /= total;
  return Distribution1D::histogram(g.v_edges(), std::move(w));
}

FpeTrace fpe_run(const DensityField& rho0, const ModelSpec& model, const FpeConfig& cfg, double T,
                 std::size_t snapshot_every) {
  cfg.validate();
  const double ratio = T / cfg.dt;
  const double nr = std::round(ratio);
  if (!(T >= 0.0) || std::abs(ratio - nr) > 1e-9 * std::max(1.0, ratio)) {
    throw InvalidArgument("fpe_run: T must be a nonnegative multiple of dt");
  }
  const auto n = static_cast<std::size_t>(nr);
  FpeTrace trace;
  auto diag = [](const DensityField& r, const FpeStepInfo& info) {
    return FpeDiagnostics{r.time, r.total_mass(), r.boundary_mass(), r.v_moment(), info.picard_iterations,
                          info.clipped_cells, info.mass_defect};
  };
  trace.snapshots.push_back(rho0);
  trace.diagnostics.push_back(diag(rho0, FpeStepInfo{}));
  DensityField cur = rho0;
  for (std::size_t s = 1; s <= n; ++s) {
    FpeStepInfo info;
    cur = fpe_step(cur, model, cfg, &info);
    trace.diagnostics.push_back(diag(cur, info));
    if ((snapshot_every > 0 && s % snapshot_every == 0) || (snapshot_every == 0 && s == n)) {
      trace.snapshots.push_back(cur);
    }
  }
  return trace;
}

}  // namespace mfk
