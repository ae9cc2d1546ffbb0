#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ltpinn {

enum class VelocityRange { full, half };

/// Velocity nodes and weights. A full-range rule lives on [-1, 1] and its
/// weights sum to 2; a half-range rule lives on [0, 1] and sums to 1.
struct VelocityQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  VelocityRange range = VelocityRange::full;

  std::size_t size() const { return nodes.size(); }

  /// Index of the node at -nodes[k]; requires a symmetric full-range rule.
  std::size_t mirror(std::size_t k) const { return nodes.size() - 1 - k; }

  /// Throws std::invalid_argument if the invariants of the range are violated.
  void validate(double tol = 1e-12) const;
};

enum class VelocityRule { gauss, uniform };

VelocityRule parse_velocity_rule(const std::string& name);
std::string to_string(VelocityRule rule);

/// Gauss-Legendre nodes and weights on [a, b], nodes ascending.
VelocityQuadrature gauss_legendre(std::size_t n, double a = -1.0, double b = 1.0);

/// n equispaced nodes including both endpoints, trapezoid weights. n >= 2.
VelocityQuadrature uniform_trapezoid(std::size_t n, double a = -1.0, double b = 1.0);

VelocityQuadrature make_full_range(VelocityRule rule, std::size_t n);

/// Gauss-Legendre on (0, 1] with weights summing to 1.
VelocityQuadrature half_range_gauss(std::size_t n);

}  // namespace ltpinn
