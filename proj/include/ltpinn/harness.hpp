#pragma once

// Experiment orchestration: JSON configuration, reference runs, training,
// PINN-versus-reference comparison and the command-line front end.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ltpinn/ap_solver.hpp"
#include "ltpinn/mlp.hpp"
#include "ltpinn/quadrature.hpp"
#include "ltpinn/trainer.hpp"
#include "ltpinn/transport.hpp"

namespace ltpinn::harness {

enum class InitialKind { double_peak, zero };

struct ProblemSection {
  double epsilon = 1e-2;
  double sigma = 1.0;  // constant scattering cross-section
  double t_final = 0.0625;
  BoundaryKind boundary = BoundaryKind::periodic;
  InitialKind initial = InitialKind::double_peak;
  double inflow_left = 1.0;   // isotropic value entering at x = 0
  double inflow_right = 0.0;  // isotropic value entering at x = 1
};

struct TrainingGridSection {
  std::size_t n_t = 50;
  std::size_t n_x = 20;
  VelocityRule velocity_rule = VelocityRule::gauss;
  std::size_t velocity_count = 17;
};

struct ReferenceSection {
  std::size_t n_cells = 40;
  double dt_factor = 0.5;  // dt = dt_factor dx^2
  std::size_t half_range_nodes = 16;
  bool write_f = false;  // also dump f at every +-v node to reference_f.csv
};

struct CompareSection {
  VelocityRule velocity_rule = VelocityRule::uniform;
  std::size_t velocity_count = 32;
};

struct ExperimentConfig {
  std::string test_id = "test1";  // test1 | test2 | custom
  ProblemSection problem;
  TrainingGridSection training_grid;
  mlp::NetworkConfig network;
  train::AdamConfig adam{0.005};
  train::SchedulerConfig scheduler;
  train::BalanceState balance;
  std::size_t epochs = 2500;
  // Density error against the reference is logged every monitor_every
  // epochs (0 disables it).
  std::size_t monitor_every = 100;
  // Interior (t, x) rows per Adam step, 0 for full batch. Shuffled with the
  // network seed.
  std::size_t batch_rows = 0;
  ReferenceSection reference;
  CompareSection compare;
  // Empty means {1/4, 1/2, 3/4, 1} t_final.
  std::vector<double> snapshot_times;
  std::filesystem::path output_dir = "runs/test1";

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
  std::vector<double> resolved_snapshot_times() const;
  ProblemSpec problem_spec() const;
  CollocationGrid training_grid_points() const;
  ap::APConfig reference_config() const;
  VelocityQuadrature compare_quadrature() const;
  train::TrainerConfig trainer_config() const;
};

ExperimentConfig preset(const std::string& test_id);

/// Starts from the preset named by "test_id" (default test1) and overrides
/// every field present. Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// ---------------------------------------------------------------------------

/// Full-range density u = int f dv of the reference, one row per snapshot.
struct ReferenceDensity {
  std::vector<double> times;
  std::vector<double> xs;
  std::vector<std::vector<double>> u;  // u[n][i] at times[n], xs[i]
  // (t, x, v, f) rows, filled only when reference.write_f is set.
  std::vector<std::array<double, 4>> f_samples;
};

ReferenceDensity compute_reference(const ExperimentConfig& config);
void write_reference_csv(const std::filesystem::path& path, const ReferenceDensity& ref);
ReferenceDensity read_reference_csv(const std::filesystem::path& path);

/// u(t, x) = sum_k w_k f_nn(t, x, v_k) at every reference point.
std::vector<double> network_density(const ad::ParameterStore& store,
                                    const mlp::NetworkConfig& net,
                                    const VelocityQuadrature& quad, double t,
                                    std::span<const double> xs);

struct SnapshotError {
  double time = 0.0;
  double relative_error = 0.0;
  double max_gap = 0.0;
  // Relative error restricted to x in [0.1, 0.9].
  double interior_relative_error = 0.0;
  // Largest rise u(x_{i+1}) - u(x_i) of the prediction; <= 0 for a
  // non-increasing profile.
  double max_rise = 0.0;
};

struct ComparisonReport {
  std::string test_id;
  std::uint64_t seed = 0;
  std::vector<SnapshotError> snapshots;
  train::LossValues final_losses;
  double final_total = 0.0;
  double initial_total = 0.0;
  struct Trajectory {
    double first = 1.0;
    double last = 1.0;
    double min = 1.0;
    double max = 1.0;
  };
  Trajectory lambda_i;
  Trajectory lambda_b;
  std::vector<std::string> files;
};

nlohmann::json report_to_json(const ComparisonReport& report);

// File names inside the output directory.
inline constexpr const char* kReferenceFile = "reference.csv";
inline constexpr const char* kReferenceFFile = "reference_f.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kWeightsFile = "weights.csv";
inline constexpr const char* kMonitorFile = "monitor.csv";
inline constexpr const char* kComparisonFile = "comparison.csv";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kConfigFile = "config.json";

/// Writes reference.csv (t,x,rho) with rho the full-range density, and
/// reference_f.csv (t,x,v,f) when reference.write_f is set.
ReferenceDensity run_reference(const ExperimentConfig& config);

struct MonitorRow {
  std::size_t epoch = 0;
  double time = 0.0;
  double relative_error = 0.0;
};

struct TrainOutcome {
  train::TrainResult result;
  std::vector<MonitorRow> monitor;
};

/// Trains and writes checkpoint.json, history.csv, weights.csv and, when
/// monitoring, monitor.csv. On a training abort the partial history is
/// written before the error propagates.
TrainOutcome run_train(const ExperimentConfig& config);

/// Reads checkpoint, history and reference from the output directory and
/// writes comparison.csv (t,x,rho_pred,rho_ref) and report.json.
ComparisonReport run_compare(const ExperimentConfig& config);

ComparisonReport run_all(const ExperimentConfig& config);

/// Command-line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace ltpinn::harness
