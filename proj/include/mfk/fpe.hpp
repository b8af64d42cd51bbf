#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfk/measure.hpp"
#include "mfk/model.hpp"

namespace mfk {

/// Uniform cells on [-R_u, R_u] x [-R_v, R_v] for the m = 1 phase plane.
struct PhaseGrid {
  double R_u = 1.0;
  double R_v = 1.0;
  std::size_t n_u = 64;
  std::size_t n_v = 64;

  double h_u() const noexcept { return 2.0 * R_u / static_cast<double>(n_u); }
  double h_v() const noexcept { return 2.0 * R_v / static_cast<double>(n_v); }
  double cell_area() const noexcept { return h_u() * h_v(); }
  double u_center(std::size_t i) const noexcept { return -R_u + (static_cast<double>(i) + 0.5) * h_u(); }
  double v_center(std::size_t j) const noexcept { return -R_v + (static_cast<double>(j) + 0.5) * h_v(); }
  std::vector<double> u_edges() const;
  std::vector<double> v_edges() const;
  void validate() const;
};

/// Per-cell masses, row-major with the u index outermost: mass(i, j) sits at
/// i * n_v + j.
struct DensityField {
  PhaseGrid grid;
  std::vector<double> mass;
  double time = 0.0;

  double& at(std::size_t i, std::size_t j) { return mass[i * grid.n_v + j]; }
  double at(std::size_t i, std::size_t j) const { return mass[i * grid.n_v + j]; }
  double total_mass() const;
  /// Mass in the outermost ring of cells.
  double boundary_mass() const;
  /// integral (1 + u^2 + v^2) d rho.
  double v_moment() const;
  /// Mean of u under rho.
  double mean_u() const;
};

/// Cell masses of a bivariate Gaussian (3 x 3 sub-cell midpoint samples per
/// cell), normalized to unit mass on the grid.
DensityField gaussian_density(const PhaseGrid& grid, std::array<double, 2> mean, std::array<double, 3> cov);

/// L1 distance sum |a - b| between two fields on the same grid.
double l1_distance(const DensityField& a, const DensityField& b);

enum class Limiter { none, van_leer };

struct FpeConfig {
  double dt = 1e-3;
  double picard_tol = 1e-9;
  std::size_t picard_max_iter = 50;
  Limiter limiter = Limiter::van_leer;
  /// Courant bound per advective substep; larger steps are sub-cycled.
  double cfl = 0.25;

  void validate() const;
};

struct FpeStepInfo {
  std::size_t picard_iterations = 0;
  double picard_residual = 0.0;
  std::size_t clipped_cells = 0;
  double mass_defect = 0.0;  // |mass after - mass before|
};

/// One Strang step T_u(dt/2) V(dt/2) D(dt) V(dt/2) T_u(dt/2) with the force
/// iterated to a fixed point against the output u-marginal. Throws
/// NumericalFailure on Picard non-convergence or a negative cell below
/// -1e-14 (smaller negatives are clipped and counted).
DensityField fpe_step(const DensityField& rho, const ModelSpec& model, const FpeConfig& cfg,
                      FpeStepInfo* info = nullptr);

/// Force F(u_i, rho) on the u cell centers, from the u-marginal of rho.
std::vector<double> fpe_force(const DensityField& rho, const ModelSpec& model);

Distribution1D marginal_u(const DensityField& rho);
Distribution1D marginal_v(const DensityField& rho);

struct FpeDiagnostics {
  double t = 0.0;
  double mass = 0.0;
  double boundary_mass = 0.0;
  double v_moment = 0.0;
  std::size_t picard_iterations = 0;
  std::size_t clipped_cells = 0;
  double mass_defect = 0.0;
};

struct FpeTrace {
  std::vector<DensityField> snapshots;
  std::vector<FpeDiagnostics> diagnostics;  // one entry per step plus the initial state
};

/// Iterates fpe_step over T = n dt, keeping every `snapshot_every`-th field
/// (and the initial one).
FpeTrace fpe_run(const DensityField& rho0, const ModelSpec& model, const FpeConfig& cfg, double T,
                 std::size_t snapshot_every = 0);

}  // namespace mfk
