#include "ltpinn/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace ltpinn {

void VelocityQuadrature::validate(double tol) const {
  if (nodes.empty() || nodes.size() != weights.size()) {
    throw std::invalid_argument("quadrature: nodes and weights must be nonempty and equal length");
  }
  const double lo = range == VelocityRange::full ? -1.0 : 0.0;
  const double total = range == VelocityRange::full ? 2.0 : 1.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] < lo - tol || nodes[k] > 1.0 + tol) {
      throw std::invalid_argument("quadrature: node outside the velocity range");
    }
    if (!(weights[k] > 0.0)) {
      throw std::invalid_argument("quadrature: weights must be positive");
    }
  }
  const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(s - total) > tol * total) {
    throw std::invalid_argument("quadrature: weights do not sum to the range measure");
  }
  if (range == VelocityRange::full) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::size_t m = mirror(k);
      if (std::abs(nodes[k] + nodes[m]) > tol ||
          std::abs(weights[k] - weights[m]) > tol) {
        throw std::invalid_argument("quadrature: full-range rule must be symmetric");
      }
    }
  }
}

VelocityRule parse_velocity_rule(const std::string& name) {
  if (name == "gauss") return VelocityRule::gauss;
  if (name == "uniform") return VelocityRule::uniform;
  throw std::invalid_argument("unknown velocity rule '" + name + "'");
}

std::string to_string(VelocityRule rule) {
  return rule == VelocityRule::gauss ? "gauss" : "uniform";
}

// Newton iteration on P_n from the Chebyshev-like initial guess; the symmetric
// partner of each root is filled in directly so the rule is exactly symmetric.
VelocityQuadrature gauss_legendre(std::size_t n, double a, double b) {
  if (n == 0) throw std::invalid_argument("gauss_legendre: n must be positive");
  VelocityQuadrature q;
  q.nodes.assign(n, 0.0);
  q.weights.assign(n, 0.0);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const std::size_t m = (n + 1) / 2;
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = ((2.0 * dj - 1.0) * z * p2 - (dj - 1.0) * p3) / dj;
      }
      dp = dn * (z * p1 - p2) / (z * z - 1.0);
      const double z_old = z;
      z = z_old - p1 / dp;
      if (std::abs(z - z_old) <= 1e-15) break;
    }
    // Recompute the derivative at the converged root.
    {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = ((2.0 * dj - 1.0) * z * p2 - (dj - 1.0) * p3) / dj;
      }
      dp = dn * (z * p1 - p2) / (z * z - 1.0);
    }
    if (2 * i + 1 == n) z = 0.0;
    const double w = 2.0 * half / ((1.0 - z * z) * dp * dp);
    q.nodes[i] = mid - half * z;
    q.nodes[n - 1 - i] = mid + half * z;
    q.weights[i] = w;
    q.weights[n - 1 - i] = w;
  }
  q.range = (a == 0.0 && b == 1.0) ? VelocityRange::half : VelocityRange::full;
  return q;
}

VelocityQuadrature uniform_trapezoid(std::size_t n, double a, double b) {
  if (n < 2) throw std::invalid_argument("uniform_trapezoid: need at least 2 nodes");
  VelocityQuadrature q;
  const double h = (b - a) / static_cast<double>(n - 1);
  q.nodes.resize(n);
  q.weights.assign(n, h);
  for (std::size_t k = 0; k < n; ++k) {
    // Fill from both ends so the rule is symmetric to the last bit.
    const double offset = h * static_cast<double>(k);
    if (2 * k + 1 < n) {
      q.nodes[k] = a + offset;
      q.nodes[n - 1 - k] = b - offset;
    } else if (2 * k + 1 == n) {
      q.nodes[k] = 0.5 * (a + b);
    }
  }
  q.weights.front() = 0.5 * h;
  q.weights.back() = 0.5 * h;
  q.range = (a == 0.0 && b == 1.0) ? VelocityRange::half : VelocityRange::full;
  return q;
}

VelocityQuadrature make_full_range(VelocityRule rule, std::size_t n) {
  return rule == VelocityRule::gauss ? gauss_legendre(n) : uniform_trapezoid(n);
}

VelocityQuadrature half_range_gauss(std::size_t n) {
  return gauss_legendre(n, 0.0, 1.0);
}

}  // namespace ltpinn
