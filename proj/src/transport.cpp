#include "ltpinn/transport.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ltpinn {

BoundaryKind parse_boundary_kind(const std::string& name) {
  if (name == "periodic") return BoundaryKind::periodic;
  if (name == "inflow") return BoundaryKind::inflow;
  if (name == "specular") return BoundaryKind::specular;
  throw std::invalid_argument("unknown boundary kind '" + name + "'");
}

std::string to_string(BoundaryKind kind) {
  switch (kind) {
    case BoundaryKind::periodic:
      return "periodic";
    case BoundaryKind::inflow:
      return "inflow";
    case BoundaryKind::specular:
      return "specular";
  }
  return "unknown";
}

void ProblemSpec::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(t_final > 0.0)) throw std::invalid_argument("t_final must be positive");
  if (!sigma) throw std::invalid_argument("sigma is not set");
  if (!initial_condition) throw std::invalid_argument("initial condition is not set");
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    if (!(sigma(x) > 0.0)) {
      throw std::invalid_argument("sigma must be positive on [0, 1]");
    }
  }
  if (boundary == BoundaryKind::inflow && (!inflow_left || !inflow_right)) {
    throw std::invalid_argument("inflow boundary needs data on both walls");
  }
}

double ic_test1(double x, double v) {
  const double two_pi_x = 2.0 * std::numbers::pi * x;
  const double rho0 = 1.0 + 0.5 * std::sin(two_pi_x);
  const double temp0 = (5.0 + 2.0 * std::cos(two_pi_x)) / 20.0;
  const double a = (v - 0.75) / temp0;
  const double b = (v + 0.75) / temp0;
  return rho0 * (std::exp(-a * a) + std::exp(-b * b));
}

ProblemSpec test1_problem(double epsilon) {
  ProblemSpec spec;
  spec.epsilon = epsilon;
  spec.t_final = 50 * 0.5 / (20.0 * 20.0);
  spec.initial_condition = ic_test1;
  spec.boundary = BoundaryKind::periodic;
  return spec;
}

ProblemSpec test2_problem(double epsilon) {
  ProblemSpec spec;
  spec.epsilon = epsilon;
  spec.t_final = 97 * 0.5 / (25.0 * 25.0);
  spec.initial_condition = [](double, double) { return 0.0; };
  spec.boundary = BoundaryKind::inflow;
  spec.inflow_left = [](double, double) { return 1.0; };
  spec.inflow_right = [](double, double) { return 0.0; };
  return spec;
}

CollocationGrid make_grid(std::size_t n_t, double t_final, std::size_t n_x,
                          VelocityQuadrature quad, BoundaryKind boundary) {
  if (n_t == 0 || n_x == 0) throw std::invalid_argument("grid counts must be positive");
  if (!(t_final > 0.0)) throw std::invalid_argument("t_final must be positive");
  quad.validate();
  if (quad.range != VelocityRange::full) {
    throw std::invalid_argument("collocation grid needs a full-range quadrature");
  }
  CollocationGrid g;
  g.quad = std::move(quad);
  g.boundary = boundary;
  for (std::size_t i = 1; i <= n_t; ++i) {
    g.times.push_back(t_final * static_cast<double>(i) / static_cast<double>(n_t));
  }
  for (std::size_t j = 0; j < n_x; ++j) {
    g.xs.push_back((static_cast<double>(j) + 0.5) / static_cast<double>(n_x));
  }
  const auto& v = g.quad.nodes;
  g.interior.reserve(n_t * n_x * v.size());
  for (double t : g.times) {
    for (double x : g.xs) {
      for (double vk : v) g.interior.push_back({t, x, vk});
    }
  }
  for (double x : g.xs) {
    for (double vk : v) g.initial.push_back({0.0, x, vk});
  }
  for (double t : g.times) {
    for (double vk : v) {
      if (boundary != BoundaryKind::inflow || vk >= 0.0) g.left.push_back({t, 0.0, vk});
      if (boundary != BoundaryKind::inflow || vk <= 0.0) g.right.push_back({t, 1.0, vk});
    }
  }
  return g;
}

std::vector<double> collision(std::span<const double> f_values, double sigma_x,
                              const VelocityQuadrature& quad) {
  if (f_values.size() != quad.size()) {
    throw std::invalid_argument("collision: f has " + std::to_string(f_values.size()) +
                                " values for " + std::to_string(quad.size()) + " nodes");
  }
  if (quad.range != VelocityRange::full) {
    throw std::invalid_argument("collision: needs a full-range quadrature");
  }
  const double rho = 0.5 * density(f_values, quad);
  std::vector<double> out(f_values.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = sigma_x * (rho - f_values[k]);
  return out;
}

double residual(double f, double f_t, double f_x, double v, double collision_value,
                double epsilon) {
  (void)f;
  return epsilon * f_t + v * f_x - collision_value / epsilon;
}

double density(std::span<const double> f_values, const VelocityQuadrature& quad) {
  if (f_values.size() != quad.size()) {
    throw std::invalid_argument("density: length mismatch with quadrature");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < f_values.size(); ++k) s += quad.weights[k] * f_values[k];
  return s;
}

GridEvaluations evaluate_traced(const ad::ParameterStore& store,
                                const mlp::NetworkConfig& config,
                                const CollocationGrid& grid) {
  GridEvaluations e;
  e.interior = mlp::forward_traced(store, config, grid.interior);
  e.initial = mlp::forward_traced(store, config, grid.initial);
  e.left = mlp::forward_traced(store, config, grid.left);
  e.right = mlp::forward_traced(store, config, grid.right);
  return e;
}

namespace {

ad::TracedValue mean_of(std::vector<ad::TracedValue>& terms) {
  if (terms.empty()) throw std::invalid_argument("loss over an empty point set");
  return ad::sum(terms) * (1.0 / static_cast<double>(terms.size()));
}

}  // namespace

ad::TracedValue loss_ge(const CollocationGrid& grid,
                        std::span<const ad::TracedValue> interior,
                        const ProblemSpec& spec) {
  const std::size_t nv = grid.n_v();
  if (interior.size() != grid.interior.size()) {
    throw std::invalid_argument("loss_ge: evaluations do not cover the interior grid");
  }
  const double eps = spec.epsilon;
  std::vector<double> half_weights(nv);
  for (std::size_t k = 0; k < nv; ++k) half_weights[k] = 0.5 * grid.quad.weights[k];

  std::vector<ad::TracedValue> squares;
  squares.reserve(interior.size());
  std::vector<ad::TracedValue> parts(4);
  std::vector<double> coeffs(4);
  for (std::size_t row = 0; row * nv < interior.size(); ++row) {
    const auto f_row = interior.subspan(row * nv, nv);
    const ad::TracedValue rho = ad::weighted_sum(f_row, half_weights);
    const double sig = spec.sigma(grid.interior[row * nv].x);
    for (std::size_t k = 0; k < nv; ++k) {
      const ad::TracedValue& f = f_row[k];
      // eps f_t + v f_x - (sigma/eps)(rho - f)
      parts = {ad::tangent_t(f), ad::tangent_x(f), rho, f};
      coeffs = {eps, grid.quad.nodes[k], -sig / eps, sig / eps};
      squares.push_back(ad::square(ad::weighted_sum(parts, coeffs)));
    }
  }
  return mean_of(squares);
}

ad::TracedValue loss_ic(const CollocationGrid& grid,
                        std::span<const ad::TracedValue> initial,
                        const ProblemSpec& spec) {
  if (initial.size() != grid.initial.size()) {
    throw std::invalid_argument("loss_ic: evaluations do not cover the initial slice");
  }
  std::vector<ad::TracedValue> squares;
  squares.reserve(initial.size());
  for (std::size_t n = 0; n < initial.size(); ++n) {
    const auto& p = grid.initial[n];
    squares.push_back(ad::square(initial[n] - spec.initial_condition(p.x, p.v)));
  }
  return mean_of(squares);
}

ad::TracedValue loss_bc(const CollocationGrid& grid, std::span<const ad::TracedValue> left,
                        std::span<const ad::TracedValue> right, const ProblemSpec& spec) {
  if (grid.boundary != spec.boundary) {
    throw std::invalid_argument("loss_bc: grid built for " + to_string(grid.boundary) +
                                " boundary, problem uses " + to_string(spec.boundary));
  }
  if (left.size() != grid.left.size() || right.size() != grid.right.size()) {
    throw std::invalid_argument("loss_bc: evaluations do not cover the wall slices");
  }
  std::vector<ad::TracedValue> squares;
  switch (spec.boundary) {
    case BoundaryKind::periodic: {
      squares.reserve(left.size());
      for (std::size_t n = 0; n < left.size(); ++n) {
        squares.push_back(ad::square(left[n] - right[n]));
      }
      return mean_of(squares);
    }
    case BoundaryKind::inflow: {
      std::vector<ad::TracedValue> sq_right;
      for (std::size_t n = 0; n < left.size(); ++n) {
        const auto& p = grid.left[n];
        squares.push_back(ad::square(left[n] - spec.inflow_left(p.t, p.v)));
      }
      for (std::size_t n = 0; n < right.size(); ++n) {
        const auto& p = grid.right[n];
        sq_right.push_back(ad::square(right[n] - spec.inflow_right(p.t, p.v)));
      }
      // Average over the two walls of the per-wall means.
      return (mean_of(squares) + mean_of(sq_right)) * 0.5;
    }
    case BoundaryKind::specular: {
      const std::size_t nv = grid.n_v();
      std::vector<ad::TracedValue> sq_right;
      for (std::size_t n = 0; n < left.size(); ++n) {
        const std::size_t base = n - n % nv;
        const std::size_t m = base + grid.quad.mirror(n % nv);
        squares.push_back(ad::square(left[m] - left[n]));
        sq_right.push_back(ad::square(right[m] - right[n]));
      }
      return (mean_of(squares) + mean_of(sq_right)) * 0.5;
    }
  }
  throw std::logic_error("unhandled boundary kind");
}

ad::TracedValue total_loss(const ad::TracedValue& ge, const ad::TracedValue& ic,
                           const ad::TracedValue& bc, const LossWeights& w) {
  const ad::TracedValue terms[] = {ge, ic, bc};
  const double coeffs[] = {w.lambda_g, w.lambda_i, w.lambda_b};
  return ad::weighted_sum(terms, coeffs);
}

}  // namespace ltpinn
