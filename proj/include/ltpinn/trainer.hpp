#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltpinn/autodiff.hpp"
#include "ltpinn/mlp.hpp"
#include "ltpinn/transport.hpp"

namespace ltpinn::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// Bias-corrected Adam with moment buffers sized to the parameter vector.
class Adam {
 public:
  Adam(AdamConfig config, std::size_t parameter_count);

  /// One update from store.gradient(); increments the step counter.
  void step(ad::ParameterStore& store);

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamConfig& config() const { return config_; }
  std::size_t step_count() const { return step_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t step_ = 0;
};

struct SchedulerConfig {
  std::size_t step_size = 750;
  double gamma = 0.95;
};

/// initial * gamma^floor(epoch / step_size)
double scheduled_rate(double initial, const SchedulerConfig& s, std::size_t epoch);

struct BalanceState {
  bool enabled = true;
  double lambda_i = 1.0;
  double lambda_b = 1.0;
  double alpha = 0.9;
  std::size_t update_period = 10;
};

/// max_k |ge_grad_k| / mean_k |term_grad_k|. Empty when the ratio is not a
/// positive finite number, e.g. when the term's gradient vanishes.
std::optional<double> balance_ratio(std::span<const double> ge_grad,
                                    std::span<const double> term_grad);

struct BalanceEstimate {
  std::optional<double> lambda_hat_i;
  std::optional<double> lambda_hat_b;
};

BalanceEstimate compute_balance_weights(std::span<const double> ge_grad,
                                        std::span<const double> ic_grad,
                                        std::span<const double> bc_grad);

/// lambda <- (1 - alpha) lambda + alpha lambda_hat for every estimate that is
/// present; a missing estimate keeps the previous weight.
void update_balance(BalanceState& state, const BalanceEstimate& estimate);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_ge = 0.0;
  double loss_ic = 0.0;
  double loss_bc = 0.0;
  double total = 0.0;
  double lambda_i = 1.0;
  double lambda_b = 1.0;
  double learning_rate = 0.0;
  double wall_time = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;

  void write_csv(const std::filesystem::path& path) const;
  static TrainingHistory read_csv(const std::filesystem::path& path);
};

struct TrainerConfig {
  std::size_t epochs = 2500;
  AdamConfig adam{0.005};
  SchedulerConfig scheduler;
  BalanceState balance;
  // Interior (t, x) rows per Adam step; 0 trains on the full grid. With
  // batching an epoch is one shuffled pass over all rows.
  std::size_t batch_rows = 0;
  std::uint64_t batch_seed = 0;
};

/// Called with the number of completed updates and the current parameters.
using EpochMonitor = std::function<void(std::size_t epoch, const ad::ParameterStore&)>;

struct TrainResult {
  ad::ParameterStore store;
  TrainingHistory history;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, TrainingHistory partial, EpochRecord offending)
      : std::runtime_error(what),
        partial_(std::move(partial)),
        offending_(offending) {}

  const TrainingHistory& partial_history() const { return partial_; }
  const EpochRecord& offending_epoch() const { return offending_; }

 private:
  TrainingHistory partial_;
  EpochRecord offending_;
};

/// Full-batch training by default. Per epoch: evaluate the three losses, refresh the
/// balance weights every update_period epochs, back-propagate the weighted
/// total, take an Adam step and advance the scheduler.
///
/// `monitor` (if set) runs before the first update, every `monitor_every`
/// epochs, and after the last update.
TrainResult train(const ProblemSpec& spec, const CollocationGrid& grid,
                  const mlp::NetworkConfig& net, const TrainerConfig& config,
                  const EpochMonitor& monitor = {}, std::size_t monitor_every = 0);

struct LossValues {
  double ge = 0.0;
  double ic = 0.0;
  double bc = 0.0;
};

/// The unweighted losses of a parameter set on a grid.
LossValues evaluate_losses(const ad::ParameterStore& store, const mlp::NetworkConfig& net,
                           const ProblemSpec& spec, const CollocationGrid& grid);

/// ||pred - ref||_2 / ||ref||_2
double relative_error(std::span<const double> rho_pred, std::span<const double> rho_ref);

}  // namespace ltpinn::train
