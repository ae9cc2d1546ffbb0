#pragma once

// The linear transport model under diffusive scaling,
//
//   eps df/dt + v df/dx = (1/eps) L(f),   L(f) = sigma(x) (1/2 int f dv - f),
//
// its collision operator and the three PINN loss terms.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ltpinn/autodiff.hpp"
#include "ltpinn/mlp.hpp"
#include "ltpinn/quadrature.hpp"

namespace ltpinn {

enum class BoundaryKind { periodic, inflow, specular };

BoundaryKind parse_boundary_kind(const std::string& name);
std::string to_string(BoundaryKind kind);

struct ProblemSpec {
  double epsilon = 1e-2;
  std::function<double(double x)> sigma = [](double) { return 1.0; };
  double t_final = 0.0625;
  std::function<double(double x, double v)> initial_condition;
  BoundaryKind boundary = BoundaryKind::periodic;
  // Inflow data g(t, v); left is used for v >= 0, right for v <= 0.
  std::function<double(double t, double v)> inflow_left;
  std::function<double(double t, double v)> inflow_right;

  /// Checks eps > 0, t_final > 0 and sigma > 0 on a sample of [0, 1].
  void validate() const;
};

/// Double-peak Maxwellian with rho0 = 1 + sin(2 pi x)/2 and
/// T0 = (5 + 2 cos(2 pi x))/20.
double ic_test1(double x, double v);

/// Smooth periodic problem with the double-peak initial data.
ProblemSpec test1_problem(double epsilon = 1e-2);
/// Zero initial data, f = 1 entering at x = 0 and f = 0 entering at x = 1.
ProblemSpec test2_problem(double epsilon = 1e-3);

struct CollocationGrid {
  std::vector<double> times;  // t_i, i = 1..N_t
  std::vector<double> xs;     // x_j, cell centres of [0, 1]
  VelocityQuadrature quad;
  BoundaryKind boundary = BoundaryKind::periodic;

  // Interior points in (i, j, k) order with k fastest, so each (t_i, x_j)
  // owns a contiguous row of quad.size() points.
  std::vector<mlp::Point> interior;
  std::vector<mlp::Point> initial;  // (0, x_j, v_k), k fastest
  std::vector<mlp::Point> left;     // wall x = 0, (i, k) order
  std::vector<mlp::Point> right;    // wall x = 1, (i, k) order

  std::size_t n_t() const { return times.size(); }
  std::size_t n_x() const { return xs.size(); }
  std::size_t n_v() const { return quad.size(); }
};

/// Uniform grid with t_i = i t_final / n_t (i = 1..n_t) and x_j = (j + 1/2)/n_x.
/// For inflow the wall slices keep only incoming directions: v >= 0 on the
/// left, v <= 0 on the right. Other kinds keep every node on both walls.
CollocationGrid make_grid(std::size_t n_t, double t_final, std::size_t n_x,
                          VelocityQuadrature quad, BoundaryKind boundary);

struct LossWeights {
  double lambda_g = 1.0;
  double lambda_i = 1.0;
  double lambda_b = 1.0;
};

/// sigma_x (rho - f_k) with rho = 1/2 sum_m w_m f_m.
std::vector<double> collision(std::span<const double> f_values, double sigma_x,
                              const VelocityQuadrature& quad);

/// eps f_t + v f_x - collision / eps.
double residual(double f, double f_t, double f_x, double v, double collision_value,
                double epsilon);

/// sum_k w_k f_k over a full-range rule.
double density(std::span<const double> f_values, const VelocityQuadrature& quad);

/// Network outputs lifted onto the active tape, one block per point set.
struct GridEvaluations {
  std::vector<ad::TracedValue> interior;
  std::vector<ad::TracedValue> initial;
  std::vector<ad::TracedValue> left;
  std::vector<ad::TracedValue> right;
};

GridEvaluations evaluate_traced(const ad::ParameterStore& store,
                                const mlp::NetworkConfig& config,
                                const CollocationGrid& grid);

ad::TracedValue loss_ge(const CollocationGrid& grid,
                        std::span<const ad::TracedValue> interior,
                        const ProblemSpec& spec);
ad::TracedValue loss_ic(const CollocationGrid& grid,
                        std::span<const ad::TracedValue> initial,
                        const ProblemSpec& spec);
ad::TracedValue loss_bc(const CollocationGrid& grid, std::span<const ad::TracedValue> left,
                        std::span<const ad::TracedValue> right, const ProblemSpec& spec);
ad::TracedValue total_loss(const ad::TracedValue& ge, const ad::TracedValue& ic,
                           const ad::TracedValue& bc, const LossWeights& w);

}  // namespace ltpinn
