#pragma once

// Fully connected network f(t, x, v) with tanh hidden layers and a linear
// output, evaluated either through the scalar tape or through a batched pass
// that carries the t- and x-tangents alongside the primal.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ltpinn/autodiff.hpp"

namespace ltpinn::mlp {

struct NetworkConfig {
  std::vector<std::size_t> layer_widths{3, 256, 256, 256, 1};
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<ad::LayerShape> layout() const;
  std::size_t parameter_count() const;
  std::size_t num_layers() const { return layer_widths.size() - 1; }
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero, drawn
/// from a generator seeded by config.seed.
ad::ParameterStore init_parameters(const NetworkConfig& config);

/// Throws std::invalid_argument unless the store was laid out for `config`.
void check_layout(const ad::ParameterStore& store, const NetworkConfig& config);

/// Scalar-tape forward pass; every weight becomes a tape node.
ad::TracedValue forward(const ad::ParameterStore& store, const NetworkConfig& config,
                        const ad::TracedValue& t, const ad::TracedValue& x,
                        const ad::TracedValue& v);

struct Point {
  double t = 0.0;
  double x = 0.0;
  double v = 0.0;
};

struct Evaluation {
  double f = 0.0;
  double f_t = 0.0;
  double f_x = 0.0;
};

/// Batched forward pass over a point set, keeping what the reverse sweep
/// needs. Channel layout per layer is [primal | d/dt | d/dx], each block one
/// column per point.
class BatchPass final : public ad::TapeBlock {
 public:
  BatchPass(const ad::ParameterStore& store, const NetworkConfig& config,
            std::span<const Point> points);

  std::size_t size() const { return batch_; }
  Evaluation output(std::size_t i) const;
  std::vector<ad::Channels> outputs() const;

  void backward(std::span<const ad::Adjoint> output_adjoints,
                std::span<double> gradient) const override;

 private:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::vector<ad::LayerShape> layout_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<RowMatrix> weights_;
  std::size_t batch_ = 0;
  std::vector<Matrix> inputs_;          // input of layer l, width x 3B
  std::vector<Matrix> hidden_tangents_;  // pre-activation tangents of layer l, width x 2B
  Matrix output_;                       // 1 x 3B
};

/// One batched pass per point set, outputs lifted onto the active tape.
std::vector<ad::TracedValue> forward_traced(const ad::ParameterStore& store,
                                            const NetworkConfig& config,
                                            std::span<const Point> points);

/// f, df/dt, df/dx at every point, in input order.
std::vector<Evaluation> evaluate_grid(const ad::ParameterStore& store,
                                      const NetworkConfig& config,
                                      std::span<const Point> points);

struct Checkpoint {
  NetworkConfig config;
  ad::ParameterStore store;
};

nlohmann::json checkpoint_to_json(const ad::ParameterStore& store,
                                  const NetworkConfig& config);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore& store,
                     const NetworkConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ltpinn::mlp
