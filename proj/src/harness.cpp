#include "ltpinn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

namespace ltpinn::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

InitialKind parse_initial(const std::string& s) {
  if (s == "double_peak") return InitialKind::double_peak;
  if (s == "zero") return InitialKind::zero;
  throw std::invalid_argument("unknown initial condition '" + s + "'");
}

std::string to_string(InitialKind k) {
  return k == InitialKind::double_peak ? "double_peak" : "zero";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(test_id == "test1" || test_id == "test2" || test_id == "custom",
          "test_id must be test1, test2 or custom");
  require(problem.epsilon > 0.0, "problem.epsilon must be positive");
  require(problem.sigma > 0.0, "problem.sigma must be positive");
  require(problem.t_final >= 0.0, "problem.t_final must be non-negative");
  require(training_grid.n_t > 0 && training_grid.n_x > 0 && training_grid.velocity_count > 0,
          "training_grid counts must be positive");
  require(training_grid.velocity_rule == VelocityRule::gauss ||
              training_grid.velocity_count >= 2,
          "a uniform velocity rule needs at least two nodes");
  network.validate();
  require(adam.learning_rate > 0.0, "adam.learning_rate must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
          "adam betas must lie in [0, 1)");
  require(adam.eps_hat > 0.0, "adam.eps_hat must be positive");
  require(scheduler.step_size > 0, "scheduler.step_size must be positive");
  require(scheduler.gamma > 0.0, "scheduler.gamma must be positive");
  require(balance.update_period > 0, "balance.update_period must be positive");
  require(balance.alpha >= 0.0 && balance.alpha <= 1.0, "balance.alpha must lie in [0, 1]");
  require(reference.n_cells > 1 && reference.half_range_nodes > 0,
          "reference counts must be positive");
  require(reference.dt_factor > 0.0, "reference.dt_factor must be positive");
  require(compare.velocity_count >= 2, "compare.velocity_count must be at least 2");
  for (double t : snapshot_times) {
    require(t >= 0.0 && t <= problem.t_final, "snapshot times must lie in [0, t_final]");
  }
  require(std::is_sorted(snapshot_times.begin(), snapshot_times.end()),
          "snapshot times must ascend");
}

std::vector<double> ExperimentConfig::resolved_snapshot_times() const {
  if (!snapshot_times.empty()) return snapshot_times;
  const double T = problem.t_final;
  return {0.25 * T, 0.5 * T, 0.75 * T, T};
}

ProblemSpec ExperimentConfig::problem_spec() const {
  ProblemSpec s;
  s.epsilon = problem.epsilon;
  const double sig = problem.sigma;
  s.sigma = [sig](double) { return sig; };
  s.t_final = problem.t_final;
  s.boundary = problem.boundary;
  if (problem.initial == InitialKind::double_peak) {
    s.initial_condition = ic_test1;
  } else {
    s.initial_condition = [](double, double) { return 0.0; };
  }
  const double gl = problem.inflow_left;
  const double gr = problem.inflow_right;
  s.inflow_left = [gl](double, double) { return gl; };
  s.inflow_right = [gr](double, double) { return gr; };
  return s;
}

CollocationGrid ExperimentConfig::training_grid_points() const {
  return make_grid(training_grid.n_t, problem.t_final, training_grid.n_x,
                   make_full_range(training_grid.velocity_rule, training_grid.velocity_count),
                   problem.boundary);
}

ap::APConfig ExperimentConfig::reference_config() const {
  return ap::make_config(problem_spec(), reference.n_cells, reference.dt_factor,
                         reference.half_range_nodes);
}

VelocityQuadrature ExperimentConfig::compare_quadrature() const {
  return make_full_range(compare.velocity_rule, compare.velocity_count);
}

train::TrainerConfig ExperimentConfig::trainer_config() const {
  train::TrainerConfig c;
  c.epochs = epochs;
  c.adam = adam;
  c.scheduler = scheduler;
  c.balance = balance;
  c.batch_rows = batch_rows;
  c.batch_seed = network.seed;
  return c;
}

ExperimentConfig preset(const std::string& test_id) {
  ExperimentConfig c;
  c.test_id = test_id;
  if (test_id == "test1" || test_id == "custom") {
    const auto spec = test1_problem();
    c.problem.t_final = spec.t_final;
    c.output_dir = "runs/" + test_id;
    return c;
  }
  if (test_id == "test2") {
    const auto spec = test2_problem();
    c.problem.epsilon = spec.epsilon;
    c.problem.t_final = spec.t_final;
    c.problem.boundary = BoundaryKind::inflow;
    c.problem.initial = InitialKind::zero;
    c.problem.inflow_left = 1.0;
    c.problem.inflow_right = 0.0;
    c.training_grid = {97, 25, VelocityRule::uniform, 17};
    c.adam.learning_rate = 5e-4;
    c.scheduler = {50, 0.95};
    c.epochs = 400;
    c.monitor_every = 20;
    c.output_dir = "runs/test2";
    return c;
  }
  throw std::invalid_argument("unknown test_id '" + test_id + "'");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

// Reads `key` from `obj` into `out` when present; records it as seen.
template <typename T>
void read_field(const json& obj, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void reject_unknown(const json& obj, const std::set<std::string>& seen,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!seen.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + where + key + "'");
    }
  }
}

const json& section(const json& doc, const char* key, std::set<std::string>& seen) {
  static const json empty = json::object();
  seen.insert(key);
  auto it = doc.find(key);
  if (it == doc.end()) return empty;
  if (!it->is_object()) {
    throw std::invalid_argument(std::string("config: '") + key + "' must be an object");
  }
  return *it;
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");
  std::set<std::string> top;
  std::string id = "test1";
  read_field(doc, "test_id", id, top);
  ExperimentConfig c = preset(id);

  {
    std::set<std::string> seen;
    const json& p = section(doc, "problem", top);
    read_field(p, "epsilon", c.problem.epsilon, seen);
    read_field(p, "sigma", c.problem.sigma, seen);
    read_field(p, "t_final", c.problem.t_final, seen);
    std::string boundary = to_string(c.problem.boundary);
    read_field(p, "boundary", boundary, seen);
    c.problem.boundary = parse_boundary_kind(boundary);
    std::string initial = to_string(c.problem.initial);
    read_field(p, "initial", initial, seen);
    c.problem.initial = parse_initial(initial);
    read_field(p, "inflow_left", c.problem.inflow_left, seen);
    read_field(p, "inflow_right", c.problem.inflow_right, seen);
    reject_unknown(p, seen, "problem.");
  }
  {
    std::set<std::string> seen;
    const json& g = section(doc, "training_grid", top);
    read_field(g, "n_t", c.training_grid.n_t, seen);
    read_field(g, "n_x", c.training_grid.n_x, seen);
    std::string rule = to_string(c.training_grid.velocity_rule);
    read_field(g, "velocity_rule", rule, seen);
    c.training_grid.velocity_rule = parse_velocity_rule(rule);
    read_field(g, "velocity_count", c.training_grid.velocity_count, seen);
    reject_unknown(g, seen, "training_grid.");
  }
  {
    std::set<std::string> seen;
    const json& n = section(doc, "network", top);
    read_field(n, "widths", c.network.layer_widths, seen);
    read_field(n, "seed", c.network.seed, seen);
    reject_unknown(n, seen, "network.");
  }
  {
    std::set<std::string> seen;
    const json& a = section(doc, "adam", top);
    read_field(a, "learning_rate", c.adam.learning_rate, seen);
    read_field(a, "beta1", c.adam.beta1, seen);
    read_field(a, "beta2", c.adam.beta2, seen);
    read_field(a, "eps_hat", c.adam.eps_hat, seen);
    reject_unknown(a, seen, "adam.");
  }
  {
    std::set<std::string> seen;
    const json& s = section(doc, "scheduler", top);
    read_field(s, "step_size", c.scheduler.step_size, seen);
    read_field(s, "gamma", c.scheduler.gamma, seen);
    reject_unknown(s, seen, "scheduler.");
  }
  {
    std::set<std::string> seen;
    const json& b = section(doc, "balance", top);
    read_field(b, "enabled", c.balance.enabled, seen);
    read_field(b, "alpha", c.balance.alpha, seen);
    read_field(b, "update_period", c.balance.update_period, seen);
    read_field(b, "lambda_i", c.balance.lambda_i, seen);
    read_field(b, "lambda_b", c.balance.lambda_b, seen);
    reject_unknown(b, seen, "balance.");
  }
  {
    std::set<std::string> seen;
    const json& t = section(doc, "training", top);
    read_field(t, "epochs", c.epochs, seen);
    read_field(t, "monitor_every", c.monitor_every, seen);
    read_field(t, "batch_rows", c.batch_rows, seen);
    reject_unknown(t, seen, "training.");
  }
  {
    std::set<std::string> seen;
    const json& r = section(doc, "reference", top);
    read_field(r, "n_cells", c.reference.n_cells, seen);
    read_field(r, "dt_factor", c.reference.dt_factor, seen);
    read_field(r, "half_range_nodes", c.reference.half_range_nodes, seen);
    read_field(r, "write_f", c.reference.write_f, seen);
    reject_unknown(r, seen, "reference.");
  }
  {
    std::set<std::string> seen;
    const json& m = section(doc, "compare", top);
    std::string rule = to_string(c.compare.velocity_rule);
    read_field(m, "velocity_rule", rule, seen);
    c.compare.velocity_rule = parse_velocity_rule(rule);
    read_field(m, "velocity_count", c.compare.velocity_count, seen);
    reject_unknown(m, seen, "compare.");
  }
  read_field(doc, "snapshot_times", c.snapshot_times, top);
  std::string out = c.output_dir.string();
  read_field(doc, "output_dir", out, top);
  c.output_dir = out;
  reject_unknown(doc, top, "");
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return {
      {"test_id", c.test_id},
      {"problem",
       {{"epsilon", c.problem.epsilon},
        {"sigma", c.problem.sigma},
        {"t_final", c.problem.t_final},
        {"boundary", to_string(c.problem.boundary)},
        {"initial", to_string(c.problem.initial)},
        {"inflow_left", c.problem.inflow_left},
        {"inflow_right", c.problem.inflow_right}}},
      {"training_grid",
       {{"n_t", c.training_grid.n_t},
        {"n_x", c.training_grid.n_x},
        {"velocity_rule", to_string(c.training_grid.velocity_rule)},
        {"velocity_count", c.training_grid.velocity_count}}},
      {"network", {{"widths", c.network.layer_widths}, {"seed", c.network.seed}}},
      {"adam",
       {{"learning_rate", c.adam.learning_rate},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"eps_hat", c.adam.eps_hat}}},
      {"scheduler", {{"step_size", c.scheduler.step_size}, {"gamma", c.scheduler.gamma}}},
      {"balance",
       {{"enabled", c.balance.enabled},
        {"alpha", c.balance.alpha},
        {"update_period", c.balance.update_period},
        {"lambda_i", c.balance.lambda_i},
        {"lambda_b", c.balance.lambda_b}}},
      {"training",
       {{"epochs", c.epochs},
        {"monitor_every", c.monitor_every},
        {"batch_rows", c.batch_rows}}},
      {"reference",
       {{"n_cells", c.reference.n_cells},
        {"dt_factor", c.reference.dt_factor},
        {"half_range_nodes", c.reference.half_range_nodes},
        {"write_f", c.reference.write_f}}},
      {"compare",
       {{"velocity_rule", to_string(c.compare.velocity_rule)},
        {"velocity_count", c.compare.velocity_count}}},
      {"snapshot_times", c.snapshot_times},
      {"output_dir", c.output_dir.string()},
  };
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const fs::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config_to_json(config).dump(2) << '\n';
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

// ---------------------------------------------------------------------------
// Reference

ReferenceDensity compute_reference(const ExperimentConfig& config) {
  config.validate();
  const auto spec = config.problem_spec();
  const auto ap_cfg = config.reference_config();
  ReferenceDensity ref;
  ref.times = config.resolved_snapshot_times();
  ref.xs = ap_cfg.cell_centres();
  auto state = ap::init_parity(spec, ap_cfg);
  for (double t : ref.times) {
    try {
      state = ap::advance(std::move(state), ap_cfg, t);
    } catch (const std::exception& e) {
      throw std::runtime_error("reference solver failed on the way to t = " +
                               std::to_string(t) + ": " + e.what());
    }
    auto rho = ap::density(state, ap_cfg).rho;
    // The parity density is half the full velocity integral.
    for (double& r : rho) r *= 2.0;
    ref.u.push_back(std::move(rho));
    if (config.reference.write_f) {
      // Ascending v: the mirrored nodes first, then the positive ones.
      std::vector<double> vs;
      for (std::size_t k = ap_cfg.quad.size(); k-- > 0;) vs.push_back(-ap_cfg.quad.nodes[k]);
      for (double v : ap_cfg.quad.nodes) vs.push_back(v);
      for (double v : vs) {
        const auto f = ap::reconstruct_f(state, ap_cfg, v);
        for (std::size_t i = 0; i < f.size(); ++i) ref.f_samples.push_back({t, ref.xs[i], v, f[i]});
      }
    }
  }
  return ref;
}

void write_reference_csv(const fs::path& path, const ReferenceDensity& ref) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "t,x,rho\n";
  for (std::size_t n = 0; n < ref.times.size(); ++n) {
    for (std::size_t i = 0; i < ref.xs.size(); ++i) {
      out << ref.times[n] << ',' << ref.xs[i] << ',' << ref.u[n][i] << '\n';
    }
  }
}

ReferenceDensity read_reference_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "t,x,rho") throw std::runtime_error(path.string() + ": unexpected header");
  ReferenceDensity ref;
  std::vector<std::vector<double>> xs_per_time;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double t = 0.0, x = 0.0, rho = 0.0;
    char c1 = 0, c2 = 0;
    row >> t >> c1 >> x >> c2 >> rho;
    if (!row || c1 != ',' || c2 != ',') {
      throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    }
    if (ref.times.empty() || ref.times.back() != t) {
      ref.times.push_back(t);
      ref.u.emplace_back();
      xs_per_time.emplace_back();
    }
    ref.u.back().push_back(rho);
    xs_per_time.back().push_back(x);
  }
  if (ref.times.empty()) throw std::runtime_error(path.string() + ": no rows");
  ref.xs = xs_per_time.front();
  for (const auto& xs : xs_per_time) {
    if (xs != ref.xs) {
      throw std::runtime_error(path.string() + ": snapshots use different x-grids");
    }
  }
  return ref;
}

ReferenceDensity run_reference(const ExperimentConfig& config) {
  fs::create_directories(config.output_dir);
  auto ref = compute_reference(config);
  write_reference_csv(config.output_dir / kReferenceFile, ref);
  if (config.reference.write_f) {
    const auto path = config.output_dir / kReferenceFFile;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "t,x,v,f\n";
    for (const auto& r : ref.f_samples) {
      out << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << '\n';
    }
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Training

std::vector<double> network_density(const ad::ParameterStore& store,
                                    const mlp::NetworkConfig& net,
                                    const VelocityQuadrature& quad, double t,
                                    std::span<const double> xs) {
  std::vector<mlp::Point> pts;
  pts.reserve(xs.size() * quad.size());
  for (double x : xs) {
    for (double v : quad.nodes) pts.push_back({t, x, v});
  }
  const auto ev = mlp::evaluate_grid(store, net, pts);
  std::vector<double> u(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < quad.size(); ++k) {
      u[i] += quad.weights[k] * ev[i * quad.size() + k].f;
    }
  }
  return u;
}

namespace {

void write_weights_csv(const fs::path& path, const train::TrainingHistory& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,lambda_i,lambda_b\n";
  for (const auto& r : h.records) {
    out << r.epoch << ',' << r.lambda_i << ',' << r.lambda_b << '\n';
  }
}

void write_monitor_csv(const fs::path& path, const std::vector<MonitorRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,t,rel_err\n";
  for (const auto& r : rows) out << r.epoch << ',' << r.time << ',' << r.relative_error << '\n';
}

}  // namespace

TrainOutcome run_train(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(config.output_dir);
  const auto spec = config.problem_spec();
  const auto grid = config.training_grid_points();

  TrainOutcome outcome;
  train::EpochMonitor monitor;
  ReferenceDensity ref;
  if (config.monitor_every > 0) {
    ref = compute_reference(config);
    monitor = [&, quad = config.compare_quadrature()](std::size_t epoch,
                                                      const ad::ParameterStore& store) {
      for (std::size_t n = 0; n < ref.times.size(); ++n) {
        const auto u = network_density(store, config.network, quad, ref.times[n], ref.xs);
        outcome.monitor.push_back({epoch, ref.times[n], train::relative_error(u, ref.u[n])});
      }
    };
  }

  try {
    outcome.result = train::train(spec, grid, config.network, config.trainer_config(),
                                  monitor, config.monitor_every);
  } catch (const train::TrainingAborted& e) {
    auto partial = e.partial_history();
    partial.records.push_back(e.offending_epoch());
    partial.write_csv(config.output_dir / kHistoryFile);
    write_weights_csv(config.output_dir / kWeightsFile, partial);
    throw std::runtime_error(std::string("training aborted (partial history in ") +
                             (config.output_dir / kHistoryFile).string() + "): " + e.what());
  }
  mlp::save_checkpoint(config.output_dir / kCheckpointFile, outcome.result.store,
                       config.network);
  outcome.result.history.write_csv(config.output_dir / kHistoryFile);
  write_weights_csv(config.output_dir / kWeightsFile, outcome.result.history);
  if (config.monitor_every > 0) {
    write_monitor_csv(config.output_dir / kMonitorFile, outcome.monitor);
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Comparison

json report_to_json(const ComparisonReport& r) {
  json snaps = json::array();
  for (const auto& s : r.snapshots) {
    snaps.push_back({{"t", s.time},
                     {"rel_err", s.relative_error},
                     {"max_gap", s.max_gap},
                     {"rel_err_interior", s.interior_relative_error},
                     {"max_rise", s.max_rise}});
  }
  const auto traj = [](const ComparisonReport::Trajectory& t) {
    return json{{"first", t.first}, {"last", t.last}, {"min", t.min}, {"max", t.max}};
  };
  return {{"test_id", r.test_id},
          {"seed", r.seed},
          {"snapshots", snaps},
          {"final_losses",
           {{"ge", r.final_losses.ge},
            {"ic", r.final_losses.ic},
            {"bc", r.final_losses.bc},
            {"total", r.final_total},
            {"initial_total", r.initial_total}}},
          {"weights", {{"lambda_i", traj(r.lambda_i)}, {"lambda_b", traj(r.lambda_b)}}},
          {"files", r.files}};
}

namespace {

ComparisonReport::Trajectory summarize(const train::TrainingHistory& h,
                                       double train::EpochRecord::*field) {
  ComparisonReport::Trajectory t;
  if (h.records.empty()) return t;
  t.first = h.records.front().*field;
  t.last = h.records.back().*field;
  t.min = t.max = t.first;
  for (const auto& r : h.records) {
    t.min = std::min(t.min, r.*field);
    t.max = std::max(t.max, r.*field);
  }
  return t;
}

}  // namespace

ComparisonReport run_compare(const ExperimentConfig& config) {
  config.validate();
  const fs::path dir = config.output_dir;
  const auto ref = read_reference_csv(dir / kReferenceFile);
  const auto ckpt = mlp::load_checkpoint(dir / kCheckpointFile);
  const auto history = train::TrainingHistory::read_csv(dir / kHistoryFile);

  const auto expected = config.resolved_snapshot_times();
  if (expected.size() != ref.times.size()) {
    throw std::runtime_error("reference has " + std::to_string(ref.times.size()) +
                             " snapshots, config expects " +
                             std::to_string(expected.size()));
  }
  for (std::size_t n = 0; n < expected.size(); ++n) {
    if (std::abs(expected[n] - ref.times[n]) > 1e-12 * std::max(1.0, expected[n])) {
      throw std::runtime_error("snapshot time mismatch: reference has t = " +
                               std::to_string(ref.times[n]) + ", config expects " +
                               std::to_string(expected[n]));
    }
  }
  for (double x : ref.xs) {
    if (x < 0.0 || x > 1.0) throw std::runtime_error("reference x-grid leaves [0, 1]");
  }
  if (ckpt.config.layer_widths.front() != 3 || ckpt.config.layer_widths.back() != 1) {
    throw std::runtime_error("checkpoint is not a network f(t, x, v)");
  }

  ComparisonReport report;
  report.test_id = config.test_id;
  report.seed = ckpt.config.seed;
  const auto quad = config.compare_quadrature();

  std::ofstream csv(dir / kComparisonFile);
  if (!csv) throw std::runtime_error("cannot write " + (dir / kComparisonFile).string());
  csv.precision(std::numeric_limits<double>::max_digits10);
  csv << "t,x,rho_pred,rho_ref\n";

  for (std::size_t n = 0; n < ref.times.size(); ++n) {
    const double t = ref.times[n];
    const auto u = network_density(ckpt.store, ckpt.config, quad, t, ref.xs);
    SnapshotError s;
    s.time = t;
    s.relative_error = train::relative_error(u, ref.u[n]);
    std::vector<double> pred_in, ref_in;
    for (std::size_t i = 0; i < u.size(); ++i) {
      s.max_gap = std::max(s.max_gap, std::abs(u[i] - ref.u[n][i]));
      if (ref.xs[i] >= 0.1 && ref.xs[i] <= 0.9) {
        pred_in.push_back(u[i]);
        ref_in.push_back(ref.u[n][i]);
      }
      csv << t << ',' << ref.xs[i] << ',' << u[i] << ',' << ref.u[n][i] << '\n';
    }
    s.interior_relative_error = pred_in.empty() ? 0.0 : train::relative_error(pred_in, ref_in);
    s.max_rise = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
      s.max_rise = std::max(s.max_rise, u[i + 1] - u[i]);
    }
    report.snapshots.push_back(s);
  }
  csv.close();

  const auto spec = config.problem_spec();
  if (config.problem.t_final > 0.0) {
    report.final_losses =
        train::evaluate_losses(ckpt.store, ckpt.config, spec, config.training_grid_points());
  }
  if (!history.records.empty()) {
    const auto& last = history.records.back();
    report.initial_total = history.records.front().total;
    report.final_total = last.total;
  }
  report.lambda_i = summarize(history, &train::EpochRecord::lambda_i);
  report.lambda_b = summarize(history, &train::EpochRecord::lambda_b);

  report.files = {kReferenceFile, kCheckpointFile, kHistoryFile, kWeightsFile,
                  kComparisonFile, kReportFile};
  if (fs::exists(dir / kMonitorFile)) report.files.push_back(kMonitorFile);

  std::ofstream out(dir / kReportFile);
  if (!out) throw std::runtime_error("cannot write " + (dir / kReportFile).string());
  out << report_to_json(report).dump(2) << '\n';
  return report;
}

ComparisonReport run_all(const ExperimentConfig& config) {
  fs::create_directories(config.output_dir);
  // A stale monitor file from an earlier run must not leak into the report.
  fs::remove(config.output_dir / kMonitorFile);
  save_config(config.output_dir / kConfigFile, config);
  run_reference(config);
  run_train(config);
  return run_compare(config);
}

// ---------------------------------------------------------------------------
// CLI

namespace {

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> epochs;
  std::optional<double> epsilon;
};

void add_common(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_path, "experiment configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "network seed, overrides the config");
  cmd->add_option("--out", o.out, "output directory, overrides the config");
  cmd->add_option("--epochs", o.epochs, "training epochs, overrides the config");
  cmd->add_option("--epsilon", o.epsilon, "Knudsen number, overrides the config");
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Linear transport PINN: reference runs, training and comparison"};
  app.require_subcommand(1);
  CliOptions opts;
  auto* reference = app.add_subcommand("reference", "run the AP reference solver");
  auto* train_cmd = app.add_subcommand("train", "train the network");
  auto* compare = app.add_subcommand("compare", "compare a checkpoint with the reference");
  auto* all = app.add_subcommand("all", "reference, train and compare in sequence");
  for (auto* cmd : {reference, train_cmd, compare, all}) add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (!fs::exists(opts.config_path)) {
    std::cerr << "ltpinn: config file not found: " << opts.config_path << '\n'
              << app.help();
    return 2;
  }

  try {
    ExperimentConfig config = load_config(opts.config_path);
    if (opts.seed) config.network.seed = *opts.seed;
    if (opts.out) config.output_dir = *opts.out;
    if (opts.epochs) config.epochs = *opts.epochs;
    if (opts.epsilon) config.problem.epsilon = *opts.epsilon;
    config.validate();

    if (reference->parsed()) {
      run_reference(config);
      std::cout << "reference written to " << (config.output_dir / kReferenceFile).string()
                << '\n';
    } else if (train_cmd->parsed()) {
      const auto out = run_train(config);
      const auto& h = out.result.history.records;
      std::cout << "trained " << h.size() << " epochs";
      if (!h.empty()) std::cout << ", final total loss " << h.back().total;
      std::cout << "; checkpoint " << (config.output_dir / kCheckpointFile).string() << '\n';
    } else {
      const auto report = compare->parsed() ? run_compare(config) : run_all(config);
      for (const auto& s : report.snapshots) {
        std::cout << "t = " << s.time << "  rel_err = " << s.relative_error
                  << "  max_gap = " << s.max_gap << '\n';
      }
      std::cout << "report " << (config.output_dir / kReportFile).string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "ltpinn: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ltpinn::harness
