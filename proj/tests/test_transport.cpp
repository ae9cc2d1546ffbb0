#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ltpinn/transport.hpp"

using namespace ltpinn;

namespace {

// Evaluates the three losses of `store` on `grid` with a plain scalar loop
// over evaluate_grid output; independent of the traced reductions.
struct PlainLosses {
  double ge = 0.0, ic = 0.0, bc = 0.0;
};

PlainLosses plain_losses(const ad::ParameterStore& store, const mlp::NetworkConfig& net,
                         const CollocationGrid& g, const ProblemSpec& spec) {
  PlainLosses out;
  const auto in = mlp::evaluate_grid(store, net, g.interior);
  const std::size_t nv = g.n_v();
  for (std::size_t row = 0; row < in.size() / nv; ++row) {
    std::vector<double> f(nv);
    for (std::size_t k = 0; k < nv; ++k) f[k] = in[row * nv + k].f;
    const double sig = spec.sigma(g.interior[row * nv].x);
    const auto L = collision(f, sig, g.quad);
    for (std::size_t k = 0; k < nv; ++k) {
      const auto& e = in[row * nv + k];
      const double r = residual(e.f, e.f_t, e.f_x, g.quad.nodes[k], L[k], spec.epsilon);
      out.ge += r * r;
    }
  }
  out.ge /= static_cast<double>(in.size());
  const auto ini = mlp::evaluate_grid(store, net, g.initial);
  for (std::size_t n = 0; n < ini.size(); ++n) {
    const double d = ini[n].f - spec.initial_condition(g.initial[n].x, g.initial[n].v);
    out.ic += d * d;
  }
  out.ic /= static_cast<double>(ini.size());
  const auto l = mlp::evaluate_grid(store, net, g.left);
  const auto r = mlp::evaluate_grid(store, net, g.right);
  for (std::size_t n = 0; n < l.size(); ++n) out.bc += std::pow(l[n].f - r[n].f, 2);
  out.bc /= static_cast<double>(l.size());
  return out;
}

}  // namespace

TEST_CASE("collision of a v-constant f vanishes") {
  const auto q = make_full_range(VelocityRule::gauss, 17);
  const std::vector<double> f(17, 3.7);
  for (double c : collision(f, 2.0, q)) CHECK(std::abs(c) < 1e-14);
}

TEST_CASE("collision of the odd function f = v is -sigma v") {
  for (auto rule : {VelocityRule::gauss, VelocityRule::uniform}) {
    const auto q = make_full_range(rule, 17);
    const auto L = collision(q.nodes, 1.5, q);
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(L[k] == doctest::Approx(-1.5 * q.nodes[k]).epsilon(1e-14));
    }
  }
}

TEST_CASE("collision conserves mass and ignores constant shifts") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto q = make_full_range(VelocityRule::gauss, 17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> f(17), g(17);
    double fmax = 0.0;
    for (std::size_t k = 0; k < 17; ++k) {
      f[k] = u(rng);
      g[k] = f[k] + 0.75;
      fmax = std::max(fmax, std::abs(f[k]));
    }
    const auto L = collision(f, 1.0, q);
    const auto Lg = collision(g, 1.0, q);
    double s = 0.0;
    for (std::size_t k = 0; k < 17; ++k) {
      s += q.weights[k] * L[k];
      CHECK(std::abs(L[k] - Lg[k]) < 1e-14);
    }
    CHECK(std::abs(s) <= 1e-13 * fmax);
  }
  CHECK_THROWS_AS(collision(std::vector<double>(5, 0.0), 1.0, q), std::invalid_argument);
}

TEST_CASE("residual examples") {
  CHECK(residual(2.0, 0.0, 0.0, 0.3, 0.0, 0.1) == 0.0);
  CHECK(residual(0.0, 1.0, 0.0, 0.5, 0.0, 0.1) == doctest::Approx(0.1));
}

TEST_CASE("manufactured f = a t + b v x matches the symbolic residual") {
  // f_t = a, f_x = b v, rho = 1/2 int f dv = a t (odd part integrates to 0),
  // L = sigma (a t - f) = -sigma b v x.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto q = make_full_range(VelocityRule::gauss, 17);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), b = u(rng), t = std::abs(u(rng)), x = std::abs(u(rng));
    const double eps = 0.01 + std::abs(u(rng));
    const double sig = 1.0 + std::abs(u(rng));
    std::vector<double> f(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) f[k] = a * t + b * q.nodes[k] * x;
    const auto L = collision(f, sig, q);
    for (std::size_t k = 0; k < q.size(); ++k) {
      const double v = q.nodes[k];
      const double expected = eps * a + v * b * v + sig * b * v * x / eps;
      CHECK(std::abs(residual(f[k], a, b * v, v, L[k], eps) - expected) < 1e-12);
    }
  }
}

TEST_CASE("density examples") {
  const auto q = make_full_range(VelocityRule::uniform, 32);
  CHECK(density(std::vector<double>(32, 1.0), q) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(density(q.nodes, q)) < 1e-15);
}

TEST_CASE("double-peak initial data") {
  const double T0 = 0.35;
  for (double v : {-1.0, -0.3, 0.0, 0.75, 1.0}) {
    const double expected =
        std::exp(-std::pow((v - 0.75) / T0, 2)) + std::exp(-std::pow((v + 0.75) / T0, 2));
    CHECK(ic_test1(0.0, v) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(ic_test1(0.3, v) == ic_test1(0.3, -v));
  }
  // x = 1/4: rho0 = 3/2 and T0 = 1/4.
  CHECK(ic_test1(0.25, 0.75) == doctest::Approx(1.5 * (1.0 + std::exp(-36.0))).epsilon(1e-14));
}

TEST_CASE("problem presets") {
  const auto p1 = test1_problem();
  CHECK(p1.epsilon == 1e-2);
  CHECK(p1.t_final == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(p1.boundary == BoundaryKind::periodic);
  CHECK_NOTHROW(p1.validate());
  const auto p2 = test2_problem();
  CHECK(p2.epsilon == 1e-3);
  CHECK(p2.t_final == doctest::Approx(0.0776).epsilon(1e-15));
  CHECK(p2.inflow_left(0.0, 0.5) == 1.0);
  CHECK(p2.inflow_right(0.0, -0.5) == 0.0);
  ProblemSpec bad = p1;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p1;
  bad.sigma = [](double x) { return x - 0.5; };
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("collocation counts of the two presets") {
  const auto g1 = make_grid(50, 0.0625, 20, make_full_range(VelocityRule::gauss, 17),
                            BoundaryKind::periodic);
  CHECK(g1.interior.size() == 17000);
  CHECK(g1.left.size() == 850);
  CHECK(g1.initial.size() == 340);
  CHECK(g1.times.front() == doctest::Approx(0.0625 / 50));
  CHECK(g1.times.back() == 0.0625);

  const auto g2 = make_grid(97, 0.0776, 25, make_full_range(VelocityRule::uniform, 17),
                            BoundaryKind::inflow);
  CHECK(g2.interior.size() == 41225);
  CHECK(g2.left.size() + g2.right.size() == 1746);
  CHECK(g2.initial.size() == 425);
  for (const auto& p : g2.left) CHECK(p.v >= 0.0);
  for (const auto& p : g2.right) CHECK(p.v <= 0.0);
}

TEST_CASE("traced losses agree with a scalar evaluation") {
  const auto spec = test1_problem();
  const auto grid = make_grid(4, spec.t_final, 5, make_full_range(VelocityRule::gauss, 6),
                              BoundaryKind::periodic);
  const mlp::NetworkConfig net{{3, 6, 6, 1}, 3};
  const auto store = mlp::init_parameters(net);
  ad::Tape tape;
  ad::ActiveTape scope(tape);
  const auto e = evaluate_traced(store, net, grid);
  const auto oracle = plain_losses(store, net, grid, spec);
  CHECK(loss_ge(grid, e.interior, spec).primal() == doctest::Approx(oracle.ge).epsilon(1e-12));
  CHECK(loss_ic(grid, e.initial, spec).primal() == doctest::Approx(oracle.ic).epsilon(1e-12));
  CHECK(loss_bc(grid, e.left, e.right, spec).primal() ==
        doctest::Approx(oracle.bc).epsilon(1e-12));
}

TEST_CASE("loss edge cases") {
  ad::Tape tape;
  ad::ActiveTape scope(tape);

  SUBCASE("zero network on a zero-data problem has zero interior loss") {
    auto spec = test2_problem();
    const auto grid = make_grid(3, spec.t_final, 4, make_full_range(VelocityRule::uniform, 5),
                                BoundaryKind::inflow);
    const mlp::NetworkConfig net{{3, 4, 1}, 0};
    const ad::ParameterStore zero(net.layout());
    const auto e = evaluate_traced(zero, net, grid);
    CHECK(loss_ge(grid, e.interior, spec).primal() == 0.0);
    CHECK(loss_ic(grid, e.initial, spec).primal() == 0.0);
    // f = 0 against g = 1 on the left wall only: the wall average is 1/2.
    CHECK(loss_bc(grid, e.left, e.right, spec).primal() == doctest::Approx(0.5));
  }

  SUBCASE("exact inflow values give zero boundary loss") {
    auto spec = test2_problem();
    const auto grid = make_grid(3, spec.t_final, 4, make_full_range(VelocityRule::uniform, 5),
                                BoundaryKind::inflow);
    std::vector<ad::TracedValue> left, right;
    for (std::size_t n = 0; n < grid.left.size(); ++n) {
      left.push_back(ad::lift_input(1.0, ad::InputRole::constant));
    }
    for (std::size_t n = 0; n < grid.right.size(); ++n) {
      right.push_back(ad::lift_input(0.0, ad::InputRole::constant));
    }
    CHECK(loss_bc(grid, left, right, spec).primal() == 0.0);
  }

  SUBCASE("f0 = 1 against a zero network gives IC loss 1") {
    auto spec = test1_problem();
    spec.initial_condition = [](double, double) { return 1.0; };
    const auto grid = make_grid(2, spec.t_final, 3, make_full_range(VelocityRule::gauss, 4),
                                BoundaryKind::periodic);
    std::vector<ad::TracedValue> ini(grid.initial.size(),
                                     ad::lift_input(0.0, ad::InputRole::constant));
    CHECK(loss_ic(grid, ini, spec).primal() == 1.0);
  }

  SUBCASE("single point with residual 3 gives GE loss 9") {
    auto spec = test1_problem(0.5);
    auto grid = make_grid(1, spec.t_final, 1, make_full_range(VelocityRule::gauss, 2),
                          BoundaryKind::periodic);
    // Both nodes carry f = 0, f_t = 6: residual = eps * 6 = 3.
    const auto f = ad::active_tape().leaf({0.0, 6.0, 0.0});
    const std::vector<ad::TracedValue> in{f, f};
    CHECK(loss_ge(grid, in, spec).primal() == doctest::Approx(9.0));
    // Doubling eps doubles the eps f_t contribution.
    spec.epsilon = 1.0;
    CHECK(loss_ge(grid, in, spec).primal() == doctest::Approx(36.0));
  }

  SUBCASE("x-independent network satisfies periodicity") {
    auto spec = test1_problem();
    const auto grid = make_grid(3, spec.t_final, 3, make_full_range(VelocityRule::gauss, 4),
                                BoundaryKind::periodic);
    const mlp::NetworkConfig net{{3, 4, 1}, 2};
    auto store = mlp::init_parameters(net);
    for (std::size_t r = 0; r < 4; ++r) store.values()[r * 3 + 1] = 0.0;  // x column
    const auto e = evaluate_traced(store, net, grid);
    CHECK(loss_bc(grid, e.left, e.right, spec).primal() == 0.0);
  }

  SUBCASE("boundary kind mismatch") {
    auto spec = test1_problem();
    const auto grid = make_grid(2, spec.t_final, 2, make_full_range(VelocityRule::gauss, 4),
                                BoundaryKind::inflow);
    std::vector<ad::TracedValue> l(grid.left.size(), ad::lift_input(0.0, ad::InputRole::constant));
    std::vector<ad::TracedValue> r(grid.right.size(), ad::lift_input(0.0, ad::InputRole::constant));
    CHECK_THROWS_AS(loss_bc(grid, l, r, spec), std::invalid_argument);
  }

  SUBCASE("incomplete evaluations") {
    auto spec = test1_problem();
    const auto grid = make_grid(2, spec.t_final, 2, make_full_range(VelocityRule::gauss, 4),
                                BoundaryKind::periodic);
    std::vector<ad::TracedValue> few(3, ad::lift_input(0.0, ad::InputRole::constant));
    CHECK_THROWS_AS(loss_ge(grid, few, spec), std::invalid_argument);
  }

  SUBCASE("specular loss compares mirrored directions") {
    auto spec = test1_problem();
    spec.boundary = BoundaryKind::specular;
    const auto grid = make_grid(1, spec.t_final, 2, make_full_range(VelocityRule::gauss, 2),
                                BoundaryKind::specular);
    // Left wall f(-v) = 0, f(v) = 2: every pair differs by 2. Right wall even.
    const std::vector<ad::TracedValue> l{ad::lift_input(0.0, ad::InputRole::constant),
                                         ad::lift_input(2.0, ad::InputRole::constant)};
    const std::vector<ad::TracedValue> r{ad::lift_input(1.0, ad::InputRole::constant),
                                         ad::lift_input(1.0, ad::InputRole::constant)};
    CHECK(loss_bc(grid, l, r, spec).primal() == doctest::Approx(2.0));
  }
}

TEST_CASE("total loss combinations") {
  ad::Tape tape;
  ad::ActiveTape scope(tape);
  const auto c = [](double x) { return ad::lift_input(x, ad::InputRole::constant); };
  CHECK(total_loss(c(1), c(2), c(3), {1, 1, 1}).primal() == 6.0);
  CHECK(total_loss(c(1), c(2), c(3), {1, 0, 0}).primal() == 1.0);
  CHECK(total_loss(c(4), c(2), c(1), {1, 0.5, 2}).primal() == 7.0);
}

TEST_CASE("boundary kind names") {
  CHECK(parse_boundary_kind("inflow") == BoundaryKind::inflow);
  CHECK(to_string(BoundaryKind::specular) == "specular");
  CHECK_THROWS_AS(parse_boundary_kind("reflecting"), std::invalid_argument);
}
