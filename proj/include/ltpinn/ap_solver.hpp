#pragma once

// Asymptotic-preserving reference solver in even/odd parity variables
//
//   r = (f(v) + f(-v)) / 2,   j = (f(v) - f(-v)) / (2 eps),   v in (0, 1],
//
// advanced by an implicit relaxation step followed by an explicit transport
// step, plus an explicit solver for the eps -> 0 diffusion limit
// d_t rho = d_x (1/(3 sigma) d_x rho).

#include <cstddef>
#include <functional>
#include <vector>

#include "ltpinn/quadrature.hpp"
#include "ltpinn/transport.hpp"

namespace ltpinn::ap {

struct APConfig {
  double dx = 1.0 / 40.0;
  double dt = 0.5 / (40.0 * 40.0);
  double epsilon = 1e-2;
  std::function<double(double x)> sigma = [](double) { return 1.0; };
  BoundaryKind boundary = BoundaryKind::periodic;
  std::function<double(double t, double v)> inflow_left;
  std::function<double(double t, double v)> inflow_right;
  VelocityQuadrature quad = half_range_gauss(16);

  std::size_t n_cells() const;
  /// Cell centres (i + 1/2) dx.
  std::vector<double> cell_centres() const;
  void validate() const;
};

/// Reference configuration for a problem on a uniform mesh with dt = dt_factor dx^2.
APConfig make_config(const ProblemSpec& spec, std::size_t n_cells, double dt_factor = 0.5,
                     std::size_t half_range_nodes = 16);

/// Parity state, stored cell-major: index i * n_v + k.
struct ParityField {
  std::size_t n_x = 0;
  std::size_t n_v = 0;
  std::vector<double> r;
  std::vector<double> j;
  double time = 0.0;

  double& r_at(std::size_t i, std::size_t k) { return r[i * n_v + k]; }
  double r_at(std::size_t i, std::size_t k) const { return r[i * n_v + k]; }
  double& j_at(std::size_t i, std::size_t k) { return j[i * n_v + k]; }
  double j_at(std::size_t i, std::size_t k) const { return j[i * n_v + k]; }
};

struct DensityField {
  std::vector<double> rho;
  double time = 0.0;
};

ParityField init_parity(const ProblemSpec& spec, const APConfig& config);

/// Implicit relaxation with q = dt sigma / eps^2; rho is invariant, so the
/// implicit update is solved in closed form. Advances no time.
ParityField relaxation_step(const ParityField& state, const APConfig& config);

/// Explicit r <- r - dt v D_c j; j is unchanged. Throws std::runtime_error if
/// dt exceeds the stability bound of the effective diffusion operator.
ParityField transport_step(const ParityField& state, const APConfig& config);

/// Relaxation then transport; time += dt.
ParityField step(const ParityField& state, const APConfig& config);

/// Advance to `t_end`, shortening the last step to land on it exactly.
ParityField advance(ParityField state, const APConfig& config, double t_end);

/// rho_i = sum_k w_k r(x_i, v_k), i.e. half the full velocity integral of f.
DensityField density(const ParityField& state, const APConfig& config);

/// f(x_i, v) for a signed velocity whose magnitude is a quadrature node.
std::vector<double> reconstruct_f(const ParityField& state, const APConfig& config, double v);

/// Largest stable dt of the transport step.
double max_stable_dt(const APConfig& config);

struct DiffusionResult {
  std::vector<DensityField> snapshots;
};

/// Explicit conservative scheme for d_t rho = d_x (1/(3 sigma) d_x rho) on
/// cell centres with face coefficients 1/(3 sigma(x_{i+1/2})). Periodic
/// boundaries, or inflow with Dirichlet wall values taken from the isotropic
/// inflow data. Snapshots are taken at each entry of `times` (ascending).
DiffusionResult diffusion_solve(const ProblemSpec& spec, std::vector<double> rho0,
                                double dx, double dt, const std::vector<double>& times);

/// As above, with rho0 the half-range density of the initial condition.
DiffusionResult diffusion_solve(const ProblemSpec& spec, double dx, double dt,
                                const std::vector<double>& times,
                                std::size_t half_range_nodes = 16);

}  // namespace ltpinn::ap
