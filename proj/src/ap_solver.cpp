#include "ltpinn/ap_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ltpinn::ap {

std::size_t APConfig::n_cells() const {
  return static_cast<std::size_t>(std::llround(1.0 / dx));
}

std::vector<double> APConfig::cell_centres() const {
  std::vector<double> x(n_cells());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (static_cast<double>(i) + 0.5) * dx;
  return x;
}

void APConfig::validate() const {
  if (!(dx > 0.0) || !(dt > 0.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("AP config: dx, dt and epsilon must be positive");
  }
  if (std::abs(static_cast<double>(n_cells()) * dx - 1.0) > 1e-9) {
    throw std::invalid_argument("AP config: dx must divide the unit interval");
  }
  if (!sigma) throw std::invalid_argument("AP config: sigma is not set");
  quad.validate();
  if (quad.range != VelocityRange::half) {
    throw std::invalid_argument("AP config: needs a half-range quadrature");
  }
  if (boundary == BoundaryKind::inflow && (!inflow_left || !inflow_right)) {
    throw std::invalid_argument("AP config: inflow boundary needs data on both walls");
  }
}

APConfig make_config(const ProblemSpec& spec, std::size_t n_cells, double dt_factor,
                     std::size_t half_range_nodes) {
  APConfig c;
  c.dx = 1.0 / static_cast<double>(n_cells);
  c.dt = dt_factor * c.dx * c.dx;
  c.epsilon = spec.epsilon;
  c.sigma = spec.sigma;
  c.boundary = spec.boundary;
  c.inflow_left = spec.inflow_left;
  c.inflow_right = spec.inflow_right;
  c.quad = half_range_gauss(half_range_nodes);
  return c;
}

ParityField init_parity(const ProblemSpec& spec, const APConfig& config) {
  config.validate();
  if (!spec.initial_condition) throw std::invalid_argument("initial condition is not set");
  ParityField s;
  s.n_x = config.n_cells();
  s.n_v = config.quad.size();
  s.r.resize(s.n_x * s.n_v);
  s.j.resize(s.n_x * s.n_v);
  const auto xs = config.cell_centres();
  const double eps = config.epsilon;
  for (std::size_t i = 0; i < s.n_x; ++i) {
    for (std::size_t k = 0; k < s.n_v; ++k) {
      const double v = config.quad.nodes[k];
      const double fp = spec.initial_condition(xs[i], v);
      const double fm = spec.initial_condition(xs[i], -v);
      s.r_at(i, k) = 0.5 * (fp + fm);
      s.j_at(i, k) = (fp - fm) / (2.0 * eps);
    }
  }
  return s;
}

namespace {

struct Ghost {
  double r = 0.0;
  double j = 0.0;
};

// Ghost parities outside x = 0 (left) or x = 1 (right) for node k, built from
// the first interior cell's (r, j).
Ghost ghost_cell(const APConfig& c, bool left, std::size_t k, double r_in, double j_in,
                 double t) {
  const double v = c.quad.nodes[k];
  const double eps = c.epsilon;
  double f_plus = 0.0;   // f(v), v > 0
  double f_minus = 0.0;  // f(-v)
  switch (c.boundary) {
    case BoundaryKind::inflow:
      if (left) {
        f_minus = r_in - eps * j_in;
        f_plus = c.inflow_left(t, v);
      } else {
        f_plus = r_in + eps * j_in;
        f_minus = c.inflow_right(t, -v);
      }
      break;
    case BoundaryKind::specular:
      if (left) {
        f_minus = r_in - eps * j_in;
        f_plus = f_minus;
      } else {
        f_plus = r_in + eps * j_in;
        f_minus = f_plus;
      }
      break;
    case BoundaryKind::periodic:
      throw std::logic_error("periodic boundaries have no ghost closure");
  }
  return {0.5 * (f_plus + f_minus), (f_plus - f_minus) / (2.0 * eps)};
}

// Centred difference of `a` (r or j) at cell i for node k.
double centred_diff(const ParityField& s, const std::vector<double>& a, bool is_r,
                    std::size_t i, std::size_t k, const APConfig& c) {
  const std::size_t n = s.n_x;
  const std::size_t nv = s.n_v;
  double lo = 0.0;
  double hi = 0.0;
  if (c.boundary == BoundaryKind::periodic) {
    lo = a[((i + n - 1) % n) * nv + k];
    hi = a[((i + 1) % n) * nv + k];
  } else {
    if (i == 0) {
      const Ghost g = ghost_cell(c, true, k, s.r[k], s.j[k], s.time);
      lo = is_r ? g.r : g.j;
    } else {
      lo = a[(i - 1) * nv + k];
    }
    if (i + 1 == n) {
      const Ghost g = ghost_cell(c, false, k, s.r[i * nv + k], s.j[i * nv + k], s.time);
      hi = is_r ? g.r : g.j;
    } else {
      hi = a[(i + 1) * nv + k];
    }
  }
  return (hi - lo) / (2.0 * c.dx);
}

double min_sigma(const APConfig& c) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : c.cell_centres()) m = std::min(m, c.sigma(x));
  return m;
}

}  // namespace

ParityField relaxation_step(const ParityField& state, const APConfig& config) {
  const double eps2 = config.epsilon * config.epsilon;
  const double dt = config.dt;
  const auto xs = config.cell_centres();
  ParityField out = state;
  for (std::size_t i = 0; i < state.n_x; ++i) {
    double rho = 0.0;
    for (std::size_t k = 0; k < state.n_v; ++k) {
      rho += config.quad.weights[k] * state.r_at(i, k);
    }
    const double ds = dt * config.sigma(xs[i]);
    for (std::size_t k = 0; k < state.n_v; ++k) {
      out.r_at(i, k) = (eps2 * state.r_at(i, k) + ds * rho) / (eps2 + ds);
    }
  }
  // j uses the relaxed r; ghost cells see (r*, j^n).
  for (std::size_t i = 0; i < state.n_x; ++i) {
    const double ds = dt * config.sigma(xs[i]);
    for (std::size_t k = 0; k < state.n_v; ++k) {
      const double v = config.quad.nodes[k];
      const double dr = centred_diff(out, out.r, true, i, k, config);
      out.j_at(i, k) = (eps2 * state.j_at(i, k) - dt * v * dr) / (eps2 + ds);
    }
  }
  return out;
}

double max_stable_dt(const APConfig& config) {
  const double vmax = *std::max_element(config.quad.nodes.begin(), config.quad.nodes.end());
  return 2.0 * min_sigma(config) * config.dx * config.dx / (vmax * vmax);
}

ParityField transport_step(const ParityField& state, const APConfig& config) {
  if (config.dt > max_stable_dt(config)) {
    throw std::runtime_error("AP transport step: dt = " + std::to_string(config.dt) +
                             " exceeds the stable limit " +
                             std::to_string(max_stable_dt(config)));
  }
  ParityField out = state;
  for (std::size_t i = 0; i < state.n_x; ++i) {
    for (std::size_t k = 0; k < state.n_v; ++k) {
      const double v = config.quad.nodes[k];
      const double dj = centred_diff(state, state.j, false, i, k, config);
      out.r_at(i, k) = state.r_at(i, k) - config.dt * v * dj;
    }
  }
  return out;
}

ParityField step(const ParityField& state, const APConfig& config) {
  ParityField next = transport_step(relaxation_step(state, config), config);
  next.time = state.time + config.dt;
  return next;
}

ParityField advance(ParityField state, const APConfig& config, double t_end) {
  const double tol = 1e-9 * config.dt;
  if (t_end < state.time - tol) {
    throw std::invalid_argument("advance: target time lies in the past");
  }
  APConfig last = config;
  while (t_end - state.time > tol) {
    if (t_end - state.time < config.dt) {
      last.dt = t_end - state.time;
      state = step(state, last);
    } else {
      state = step(state, config);
    }
  }
  state.time = t_end;
  return state;
}

DensityField density(const ParityField& state, const APConfig& config) {
  DensityField d;
  d.time = state.time;
  d.rho.assign(state.n_x, 0.0);
  for (std::size_t i = 0; i < state.n_x; ++i) {
    for (std::size_t k = 0; k < state.n_v; ++k) {
      d.rho[i] += config.quad.weights[k] * state.r_at(i, k);
    }
  }
  return d;
}

std::vector<double> reconstruct_f(const ParityField& state, const APConfig& config,
                                  double v) {
  const double speed = std::abs(v);
  std::size_t node = state.n_v;
  for (std::size_t k = 0; k < state.n_v; ++k) {
    if (std::abs(config.quad.nodes[k] - speed) <= 1e-12) node = k;
  }
  if (node == state.n_v || v == 0.0) {
    throw std::invalid_argument("reconstruct_f: |v| = " + std::to_string(speed) +
                                " is not a quadrature node");
  }
  const double sign = v > 0.0 ? 1.0 : -1.0;
  std::vector<double> f(state.n_x);
  for (std::size_t i = 0; i < state.n_x; ++i) {
    f[i] = state.r_at(i, node) + sign * config.epsilon * state.j_at(i, node);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Diffusion limit

DiffusionResult diffusion_solve(const ProblemSpec& spec, std::vector<double> rho,
                                double dx, double dt, const std::vector<double>& times) {
  const std::size_t n = rho.size();
  if (n < 2 || !(dx > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("diffusion_solve: bad grid");
  }
  if (spec.boundary == BoundaryKind::specular) {
    throw std::invalid_argument("diffusion_solve: specular walls are not supported");
  }
  if (spec.boundary == BoundaryKind::inflow && (!spec.inflow_left || !spec.inflow_right)) {
    throw std::invalid_argument("diffusion_solve: inflow data missing");
  }
  // Face coefficients; face i sits between cells i-1 and i, faces 0 and n on
  // the walls (face 0 doubles as face n under periodicity).
  std::vector<double> coeff(n + 1);
  double sigma_min = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f <= n; ++f) {
    const double s = spec.sigma(static_cast<double>(f) * dx);
    sigma_min = std::min(sigma_min, s);
    coeff[f] = 1.0 / (3.0 * s);
  }
  if (dt > 1.5 * sigma_min * dx * dx) {
    throw std::runtime_error("diffusion_solve: dt exceeds the explicit stability limit");
  }

  // Isotropic inflow data g fixes the wall density at g (f = g is an exact
  // equilibrium there); the average over incoming speeds is used.
  const auto wall_value = [&](bool left, double t) {
    const auto q = half_range_gauss(8);
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      s += q.weights[k] * (left ? spec.inflow_left(t, q.nodes[k])
                                : spec.inflow_right(t, -q.nodes[k]));
    }
    return s;
  };

  std::vector<double> flux(n + 1);
  const auto advance_by = [&](double h, double t) {
    for (std::size_t f = 1; f < n; ++f) {
      flux[f] = coeff[f] * (rho[f] - rho[f - 1]) / dx;
    }
    if (spec.boundary == BoundaryKind::periodic) {
      flux[0] = coeff[0] * (rho[0] - rho[n - 1]) / dx;
      flux[n] = flux[0];
    } else {
      // Wall value imposed half a cell from the first centre.
      flux[0] = coeff[0] * (rho[0] - wall_value(true, t)) / (0.5 * dx);
      flux[n] = coeff[n] * (wall_value(false, t) - rho[n - 1]) / (0.5 * dx);
    }
    for (std::size_t i = 0; i < n; ++i) rho[i] += h * (flux[i + 1] - flux[i]) / dx;
  };

  DiffusionResult out;
  double t = 0.0;
  const double tol = 1e-9 * dt;
  for (double target : times) {
    if (target < t - tol) throw std::invalid_argument("diffusion_solve: times must ascend");
    while (target - t > tol) {
      const double h = std::min(dt, target - t);
      advance_by(h, t);
      t += h;
    }
    t = std::max(t, target);
    out.snapshots.push_back({rho, target});
  }
  return out;
}

DiffusionResult diffusion_solve(const ProblemSpec& spec, double dx, double dt,
                                const std::vector<double>& times,
                                std::size_t half_range_nodes) {
  APConfig c;
  c.dx = dx;
  c.dt = dt;
  c.epsilon = spec.epsilon;
  c.sigma = spec.sigma;
  c.boundary = spec.boundary;
  c.inflow_left = spec.inflow_left;
  c.inflow_right = spec.inflow_right;
  c.quad = half_range_gauss(half_range_nodes);
  const auto state = init_parity(spec, c);
  return diffusion_solve(spec, density(state, c).rho, dx, dt, times);
}

}  // namespace ltpinn::ap
