#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ltpinn/trainer.hpp"

using namespace ltpinn;
using namespace ltpinn::train;

namespace {

ad::ParameterStore flat_store(std::vector<double> values) {
  ad::ParameterStore s({ad::LayerShape{values.size(), 0}});
  std::copy(values.begin(), values.end(), s.values().begin());
  return s;
}

}  // namespace

TEST_CASE("first Adam step moves by about the learning rate") {
  auto s = flat_store({0.5});
  Adam adam(AdamConfig{0.01}, 1);
  s.gradient()[0] = 1.0;
  adam.step(s);
  CHECK(s.values()[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-7));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters and decays moments") {
  auto s = flat_store({0.5});
  Adam adam(AdamConfig{0.01}, 1);
  s.gradient()[0] = 2.0;
  adam.step(s);
  const double m1 = adam.first_moment()[0];
  const double v1 = adam.second_moment()[0];
  s.gradient()[0] = 0.0;
  adam.step(s);
  CHECK(adam.first_moment()[0] == doctest::Approx(0.9 * m1));
  CHECK(adam.second_moment()[0] == doctest::Approx(0.999 * v1));
  auto z = flat_store({0.25});
  Adam idle(AdamConfig{0.01}, 1);
  idle.step(z);
  CHECK(z.values()[0] == 0.25);
}

TEST_CASE("two identical-gradient steps match the hand-unrolled recurrence") {
  const double lr = 0.003, b1 = 0.9, b2 = 0.999, e = 1e-8;
  const double g = -0.37;
  double theta = 1.2;
  double m = 0.0, v = 0.0;
  for (int n = 1; n <= 2; ++n) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, n));
    const double vh = v / (1 - std::pow(b2, n));
    theta -= lr * mh / (std::sqrt(vh) + e);
  }
  auto s = flat_store({1.2});
  Adam adam(AdamConfig{lr, b1, b2, e}, 1);
  for (int n = 0; n < 2; ++n) {
    s.gradient()[0] = g;
    adam.step(s);
  }
  CHECK(std::abs(s.values()[0] - theta) < 1e-12);
}

TEST_CASE("Adam is odd under a joint sign flip") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> th(20), g(20);
  for (auto& x : th) x = n(rng);
  for (auto& x : g) x = n(rng);
  auto a = flat_store(th);
  std::vector<double> neg(th.size());
  std::transform(th.begin(), th.end(), neg.begin(), [](double x) { return -x; });
  auto b = flat_store(neg);
  Adam oa(AdamConfig{0.01}, 20), ob(AdamConfig{0.01}, 20);
  for (int step = 0; step < 3; ++step) {
    for (std::size_t i = 0; i < 20; ++i) {
      a.gradient()[i] = g[i];
      b.gradient()[i] = -g[i];
    }
    oa.step(a);
    ob.step(b);
  }
  for (std::size_t i = 0; i < 20; ++i) CHECK(a.values()[i] == -b.values()[i]);
}

TEST_CASE("step scheduler") {
  const SchedulerConfig s{750, 0.95};
  CHECK(scheduled_rate(0.005, s, 0) == 0.005);
  CHECK(scheduled_rate(0.005, s, 749) == 0.005);
  CHECK(scheduled_rate(0.005, s, 750) == doctest::Approx(0.005 * 0.95).epsilon(1e-15));
  CHECK(scheduled_rate(0.005, s, 2499) == doctest::Approx(0.005 * std::pow(0.95, 3)));
  CHECK(scheduled_rate(5e-4, {50, 0.95}, 399) == doctest::Approx(5e-4 * std::pow(0.95, 7)));
  CHECK_THROWS_AS(scheduled_rate(1.0, {0, 0.5}, 1), std::invalid_argument);
}

TEST_CASE("balance ratio examples") {
  const std::vector<double> ge{-4.0, 2.0}, ic{1.0, 1.0};
  CHECK(*balance_ratio(ge, ic) == 4.0);
  const std::vector<double> g{0.5, -3.0, 1.5};
  CHECK(*balance_ratio(g, g) >= 1.0);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_FALSE(balance_ratio(ge, zero).has_value());
  CHECK_FALSE(balance_ratio(zero, ic).has_value());
}

TEST_CASE("balance ratio homogeneity") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ge(30), ic(30);
    for (auto& x : ge) x = n(rng);
    for (auto& x : ic) x = n(rng);
    const double c = 0.25 * (1 + trial);
    // Scaling by 4 commutes with rounding, so those checks are exact.
    std::vector<double> ic_c(ic), ge_c(ge);
    for (auto& x : ic_c) x *= 4.0;
    for (auto& x : ge_c) x *= 4.0;
    const double base = *balance_ratio(ge, ic);
    CHECK(*balance_ratio(ge, ic_c) == base / 4.0);
    CHECK(*balance_ratio(ge_c, ic) == base * 4.0);
    std::vector<double> ic_r(ic);
    for (auto& x : ic_r) x *= c;
    CHECK(*balance_ratio(ge, ic_r) == doctest::Approx(base / c).epsilon(1e-14));
  }
}

TEST_CASE("moving-average update") {
  BalanceState s;
  s.alpha = 0.9;
  s.lambda_i = 1.0;
  update_balance(s, {11.0, std::nullopt});
  CHECK(std::abs(s.lambda_i - 10.0) <= 4 * std::numeric_limits<double>::epsilon() * 10.0);
  CHECK(s.lambda_b == 1.0);
  update_balance(s, {10.0, 1.0});
  CHECK(s.lambda_i == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(s.lambda_b == 1.0);
  BalanceState frozen;
  frozen.alpha = 0.0;
  update_balance(frozen, {123.0, 0.5});
  CHECK(frozen.lambda_i == 1.0);
  CHECK(frozen.lambda_b == 1.0);
}

TEST_CASE("relative error") {
  const std::vector<double> ref{1.0, -2.0, 3.0};
  CHECK(relative_error(ref, ref) == 0.0);
  std::vector<double> p(ref);
  for (auto& x : p) x *= 1.1;
  CHECK(relative_error(p, ref) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(relative_error(std::vector<double>(3, 0.0), ref) == 1.0);
  CHECK_THROWS_AS(relative_error(ref, std::vector<double>(3, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(relative_error(ref, std::vector<double>(2, 1.0)), std::invalid_argument);
}

TEST_CASE("history CSV round trip") {
  TrainingHistory h;
  for (std::size_t e = 0; e < 3; ++e) {
    h.records.push_back({e, 1.0 / 3 + e, 0.1, 0.2, 0.3, 1.5, 2.5, 1e-3, 0.01 * e});
  }
  const auto path = std::filesystem::temp_directory_path() / "ltpinn_history_test.csv";
  h.write_csv(path);
  const auto back = TrainingHistory::read_csv(path);
  REQUIRE(back.records.size() == 3);
  CHECK(back.records[2].loss_ge == h.records[2].loss_ge);
  CHECK(back.records[1].lambda_b == 2.5);
  std::filesystem::remove(path);
}

namespace {

struct Toy {
  ProblemSpec spec;
  CollocationGrid grid;
  mlp::NetworkConfig net{{3, 6, 6, 1}, 1};
};

Toy toy_problem() {
  Toy t;
  t.spec = test1_problem();
  t.grid = make_grid(5, t.spec.t_final, 6, make_full_range(VelocityRule::gauss, 6),
                     BoundaryKind::periodic);
  return t;
}

}  // namespace

TEST_CASE("zero epochs return the initialization") {
  const auto t = toy_problem();
  TrainerConfig cfg;
  cfg.epochs = 0;
  const auto r = train::train(t.spec, t.grid, t.net, cfg);
  const auto init = mlp::init_parameters(t.net);
  CHECK(std::equal(init.values().begin(), init.values().end(), r.store.values().begin()));
  CHECK(r.history.records.empty());
}

TEST_CASE("training records one row per epoch and follows the schedule") {
  const auto t = toy_problem();
  TrainerConfig cfg;
  cfg.epochs = 25;
  cfg.scheduler = {10, 0.5};
  cfg.adam.learning_rate = 0.01;
  std::vector<std::size_t> seen;
  const auto r = train::train(t.spec, t.grid, t.net, cfg,
                       [&](std::size_t e, const ad::ParameterStore&) { seen.push_back(e); }, 10);
  REQUIRE(r.history.records.size() == 25);
  for (std::size_t e = 0; e < 25; ++e) {
    CHECK(r.history.records[e].epoch == e);
    CHECK(r.history.records[e].learning_rate == scheduled_rate(0.01, cfg.scheduler, e));
  }
  CHECK(seen == std::vector<std::size_t>{0, 10, 20, 25});
  // Weights only change on update epochs.
  CHECK(r.history.records[1].lambda_i == r.history.records[9].lambda_i);
  CHECK(r.history.records[0].lambda_i != 1.0);
  for (const auto& rec : r.history.records) {
    CHECK(rec.lambda_i > 0.0);
    CHECK(std::isfinite(rec.lambda_b));
  }
}

TEST_CASE("frozen-weight training is bitwise reproducible and reduces the loss") {
  const auto t = toy_problem();
  TrainerConfig cfg;
  cfg.epochs = 60;
  cfg.balance.enabled = false;
  cfg.adam.learning_rate = 0.01;
  const auto a = train::train(t.spec, t.grid, t.net, cfg);
  const auto b = train::train(t.spec, t.grid, t.net, cfg);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    CHECK(a.history.records[e].total == b.history.records[e].total);
    CHECK(a.history.records[e].lambda_i == 1.0);
  }
  CHECK(a.history.records.back().total < a.history.records.front().total);
  const auto l = evaluate_losses(a.store, t.net, t.spec, t.grid);
  CHECK(std::isfinite(l.ge));
}

TEST_CASE("zero-data toy problem stays bounded") {
  auto spec = test2_problem(0.5);
  spec.inflow_left = [](double, double) { return 0.0; };
  const auto grid = make_grid(4, spec.t_final, 5, make_full_range(VelocityRule::uniform, 5),
                              BoundaryKind::inflow);
  const mlp::NetworkConfig net{{3, 5, 1}, 2};
  TrainerConfig cfg;
  cfg.epochs = 30;
  cfg.balance.enabled = false;
  const auto r = train::train(spec, grid, net, cfg);
  for (const auto& rec : r.history.records) CHECK(rec.total <= r.history.records[0].total * 10);
}

TEST_CASE("a non-finite loss aborts with the partial history") {
  auto t = toy_problem();
  t.spec.initial_condition = [](double x, double) { return x > 0.5 ? std::nan("") : 0.0; };
  TrainerConfig cfg;
  cfg.epochs = 5;
  try {
    train::train(t.spec, t.grid, t.net, cfg);
    FAIL("expected an abort");
  } catch (const TrainingAborted& e) {
    CHECK(e.partial_history().records.empty());
    CHECK(e.offending_epoch().epoch == 0);
    CHECK_FALSE(std::isfinite(e.offending_epoch().total));
  }
}

TEST_CASE("mini-batching") {
  const auto t = toy_problem();
  TrainerConfig full;
  full.epochs = 4;
  full.adam.learning_rate = 0.01;
  auto one = full;
  one.batch_rows = 1000;  // more rows than the grid has: a single batch
  const auto a = train::train(t.spec, t.grid, t.net, full);
  const auto b = train::train(t.spec, t.grid, t.net, one);
  for (std::size_t e = 0; e < full.epochs; ++e) {
    CHECK(b.history.records[e].total == doctest::Approx(a.history.records[e].total).epsilon(1e-10));
  }

  auto small = full;
  small.batch_rows = 7;  // 30 rows -> 5 steps per epoch
  small.batch_seed = 3;
  const auto c = train::train(t.spec, t.grid, t.net, small);
  const auto d = train::train(t.spec, t.grid, t.net, small);
  REQUIRE(c.history.records.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) CHECK(c.history.records[e].total == d.history.records[e].total);
  CHECK(c.history.records[1].total != a.history.records[1].total);
  small.batch_seed = 4;
  const auto other = train::train(t.spec, t.grid, t.net, small);
  CHECK(other.history.records[1].total != c.history.records[1].total);
}

TEST_CASE("training does not depend on heap placement") {
  auto spec = test1_problem();
  const auto grid = make_grid(6, spec.t_final, 6, make_full_range(VelocityRule::gauss, 8),
                              BoundaryKind::periodic);
  const mlp::NetworkConfig net{{3, 24, 24, 1}, 4};
  TrainerConfig cfg;
  cfg.epochs = 6;
  const auto a = train::train(spec, grid, net, cfg);
  // Shift later allocations by odd multiples of 8 bytes.
  std::vector<std::vector<double>> ballast;
  for (std::size_t n = 1; n < 40; n += 2) {
    ballast.emplace_back(n);
    const auto b = train::train(spec, grid, net, cfg);
    for (std::size_t i = 0; i < a.store.size(); ++i) {
      if (a.store.values()[i] != b.store.values()[i]) {
        FAIL("parameters differ after shifting the heap by " << n);
      }
    }
  }
}
