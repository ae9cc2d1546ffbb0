#include "ltpinn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ltpinn::train {

Adam::Adam(AdamConfig config, std::size_t parameter_count)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void Adam::step(ad::ParameterStore& store) {
  auto theta = store.values();
  const auto grad = store.gradient();
  if (theta.size() != m_.size()) {
    throw std::invalid_argument("Adam: parameter count changed");
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double n = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(b1, n);
  const double c2 = 1.0 - std::pow(b2, n);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    theta[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps_hat);
  }
}

double scheduled_rate(double initial, const SchedulerConfig& s, std::size_t epoch) {
  if (s.step_size == 0) throw std::invalid_argument("scheduler step_size must be positive");
  const auto k = static_cast<int>(epoch / s.step_size);
  return initial * std::pow(s.gamma, k);
}

std::optional<double> balance_ratio(std::span<const double> ge_grad,
                                    std::span<const double> term_grad) {
  if (ge_grad.empty() || term_grad.empty()) return std::nullopt;
  double max_ge = 0.0;
  for (double g : ge_grad) max_ge = std::max(max_ge, std::abs(g));
  double mean = 0.0;
  for (double g : term_grad) mean += std::abs(g);
  mean /= static_cast<double>(term_grad.size());
  if (mean == 0.0) return std::nullopt;
  const double ratio = max_ge / mean;
  if (!(ratio > 0.0) || !std::isfinite(ratio)) return std::nullopt;
  return ratio;
}

BalanceEstimate compute_balance_weights(std::span<const double> ge_grad,
                                        std::span<const double> ic_grad,
                                        std::span<const double> bc_grad) {
  return {balance_ratio(ge_grad, ic_grad), balance_ratio(ge_grad, bc_grad)};
}

void update_balance(BalanceState& state, const BalanceEstimate& estimate) {
  const double a = state.alpha;
  if (estimate.lambda_hat_i) {
    state.lambda_i = (1.0 - a) * state.lambda_i + a * *estimate.lambda_hat_i;
  }
  if (estimate.lambda_hat_b) {
    state.lambda_b = (1.0 - a) * state.lambda_b + a * *estimate.lambda_hat_b;
  }
}

// ---------------------------------------------------------------------------
// History

namespace {

constexpr const char* kHistoryHeader =
    "epoch,loss_ge,loss_ic,loss_bc,total,lambda_i,lambda_b,lr,wall_time";

}  // namespace

void TrainingHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << kHistoryHeader << '\n';
  for (const auto& r : records) {
    out << r.epoch << ',' << r.loss_ge << ',' << r.loss_ic << ',' << r.loss_bc << ','
        << r.total << ',' << r.lambda_i << ',' << r.lambda_b << ',' << r.learning_rate
        << ',' << r.wall_time << '\n';
  }
}

TrainingHistory TrainingHistory::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kHistoryHeader) {
    throw std::runtime_error(path.string() + ": unexpected history header");
  }
  TrainingHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    EpochRecord r;
    char c = 0;
    row >> r.epoch >> c >> r.loss_ge >> c >> r.loss_ic >> c >> r.loss_bc >> c >> r.total >>
        c >> r.lambda_i >> c >> r.lambda_b >> c >> r.learning_rate >> c >> r.wall_time;
    if (!row) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    h.records.push_back(r);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Training loop

LossValues evaluate_losses(const ad::ParameterStore& store, const mlp::NetworkConfig& net,
                           const ProblemSpec& spec, const CollocationGrid& grid) {
  ad::Tape tape;
  ad::ActiveTape scope(tape);
  const auto e = evaluate_traced(store, net, grid);
  return {loss_ge(grid, e.interior, spec).primal(), loss_ic(grid, e.initial, spec).primal(),
          loss_bc(grid, e.left, e.right, spec).primal()};
}

namespace {

std::vector<double> term_gradient(ad::Tape& tape, const ad::TracedValue& term,
                                  ad::ParameterStore& store) {
  store.zero_grad();
  tape.backward(term, store);
  return {store.gradient().begin(), store.gradient().end()};
}

// Splits the interior rows (one (t, x) pair with all its velocities) into
// shuffled batches of at most batch_rows rows. Initial and wall points stay
// whole in every batch.
std::vector<CollocationGrid> make_batches(const CollocationGrid& grid, std::size_t batch_rows,
                                          std::mt19937_64& rng) {
  const std::size_t nv = grid.n_v();
  std::vector<std::size_t> rows(grid.interior.size() / nv);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<CollocationGrid> out;
  for (std::size_t first = 0; first < rows.size(); first += batch_rows) {
    CollocationGrid b = grid;
    b.interior.clear();
    for (std::size_t n = first; n < std::min(rows.size(), first + batch_rows); ++n) {
      const auto it = grid.interior.begin() + static_cast<std::ptrdiff_t>(rows[n] * nv);
      b.interior.insert(b.interior.end(), it, it + static_cast<std::ptrdiff_t>(nv));
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

TrainResult train(const ProblemSpec& spec, const CollocationGrid& grid,
                  const mlp::NetworkConfig& net, const TrainerConfig& config,
                  const EpochMonitor& monitor, std::size_t monitor_every) {
  spec.validate();
  if (config.balance.enabled && config.balance.update_period == 0) {
    throw std::invalid_argument("balance update_period must be positive");
  }
  TrainResult result{mlp::init_parameters(net), {}};
  ad::ParameterStore& store = result.store;
  Adam adam(config.adam, store.size());
  BalanceState balance = config.balance;
  std::mt19937_64 shuffle(config.batch_seed);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (monitor && (epoch == 0 || (monitor_every > 0 && epoch % monitor_every == 0))) {
      monitor(epoch, store);
    }
    const double lr = scheduled_rate(config.adam.learning_rate, config.scheduler, epoch);
    adam.set_learning_rate(lr);

    std::vector<CollocationGrid> batches;
    if (config.batch_rows > 0) batches = make_batches(grid, config.batch_rows, shuffle);
    const std::size_t n_batches = config.batch_rows > 0 ? batches.size() : 1;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const CollocationGrid& g = config.batch_rows > 0 ? batches[b] : grid;
      ad::Tape tape;
      ad::ActiveTape scope(tape);
      const auto e = evaluate_traced(store, net, g);
      const auto ge = loss_ge(g, e.interior, spec);
      const auto ic = loss_ic(g, e.initial, spec);
      const auto bc = loss_bc(g, e.left, e.right, spec);

      if (b == 0 && balance.enabled && epoch % balance.update_period == 0) {
        const auto g_ge = term_gradient(tape, ge, store);
        const auto g_ic = term_gradient(tape, ic, store);
        const auto g_bc = term_gradient(tape, bc, store);
        update_balance(balance, compute_balance_weights(g_ge, g_ic, g_bc));
      }

      const LossWeights weights{1.0, balance.lambda_i, balance.lambda_b};
      const auto total = total_loss(ge, ic, bc, weights);
      // Batch losses are averaged into the epoch record.
      const double share = 1.0 / static_cast<double>(n_batches);
      rec.loss_ge += share * ge.primal();
      rec.loss_ic += share * ic.primal();
      rec.loss_bc += share * bc.primal();
      rec.total += share * total.primal();
      rec.lambda_i = balance.lambda_i;
      rec.lambda_b = balance.lambda_b;

      if (!std::isfinite(total.primal())) {
        rec.total = total.primal();
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch),
                              result.history, rec);
      }

      store.zero_grad();
      tape.backward(total, store);
      adam.step(store);
    }
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.records.push_back(rec);
  }
  if (monitor) monitor(config.epochs, store);
  return result;
}

double relative_error(std::span<const double> rho_pred, std::span<const double> rho_ref) {
  if (rho_pred.size() != rho_ref.size()) {
    throw std::invalid_argument("relative_error: length mismatch");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < rho_ref.size(); ++i) {
    const double d = rho_pred[i] - rho_ref[i];
    num += d * d;
    den += rho_ref[i] * rho_ref[i];
  }
  if (den == 0.0) throw std::invalid_argument("relative_error: reference has zero norm");
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace ltpinn::train
