#include "ltpinn/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

namespace ltpinn::mlp {

void NetworkConfig::validate() const {
  if (layer_widths.size() < 2) {
    throw std::invalid_argument("network needs at least an input and an output layer");
  }
  if (layer_widths.front() != 3) {
    throw std::invalid_argument("network input width must be 3 (t, x, v)");
  }
  if (layer_widths.back() != 1) {
    throw std::invalid_argument("network output width must be 1");
  }
  for (auto w : layer_widths) {
    if (w == 0) throw std::invalid_argument("layer widths must be positive");
  }
}

std::vector<ad::LayerShape> NetworkConfig::layout() const {
  validate();
  std::vector<ad::LayerShape> shapes;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
    shapes.push_back({layer_widths[l + 1], layer_widths[l]});
  }
  return shapes;
}

std::size_t NetworkConfig::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : layout()) n += s.size();
  return n;
}

ad::ParameterStore init_parameters(const NetworkConfig& config) {
  ad::ParameterStore store(config.layout());
  std::mt19937_64 rng(config.seed);
  auto values = store.values();
  for (std::size_t l = 0; l < store.layout().size(); ++l) {
    const auto& shape = store.layout()[l];
    const double bound =
        std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t w0 = store.weight_offset(l);
    for (std::size_t i = 0; i < shape.rows * shape.cols; ++i) {
      values[w0 + i] = dist(rng);
    }
  }
  return store;
}

void check_layout(const ad::ParameterStore& store, const NetworkConfig& config) {
  if (store.layout() != config.layout()) {
    throw std::invalid_argument("parameter store layout does not match network config");
  }
}

ad::TracedValue forward(const ad::ParameterStore& store, const NetworkConfig& config,
                        const ad::TracedValue& t, const ad::TracedValue& x,
                        const ad::TracedValue& v) {
  check_layout(store, config);
  std::vector<ad::TracedValue> activ{t, x, v};
  const auto& layout = store.layout();
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const auto& shape = layout[l];
    const std::size_t w0 = store.weight_offset(l);
    const std::size_t b0 = store.bias_offset(l);
    std::vector<ad::TracedValue> next;
    next.reserve(shape.rows);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      ad::TracedValue z = ad::lift_param(store, b0 + r);
      for (std::size_t c = 0; c < shape.cols; ++c) {
        z = z + ad::lift_param(store, w0 + r * shape.cols + c) * activ[c];
      }
      next.push_back(l + 1 < layout.size() ? ad::tanh(z) : z);
    }
    activ = std::move(next);
  }
  return activ.front();
}

// ---------------------------------------------------------------------------
// Batched pass

BatchPass::BatchPass(const ad::ParameterStore& store, const NetworkConfig& config,
                     std::span<const Point> points)
    : layout_(store.layout()), batch_(points.size()) {
  check_layout(store, config);
  const auto B = static_cast<Eigen::Index>(batch_);
  const auto values = store.values();
  const std::size_t L = layout_.size();

  weights_.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    weight_offsets_.push_back(store.weight_offset(l));
    weights_.emplace_back(Eigen::Map<const RowMatrix>(
        values.data() + store.weight_offset(l), static_cast<Eigen::Index>(layout_[l].rows),
        static_cast<Eigen::Index>(layout_[l].cols)));
  }

  Matrix in(3, 3 * B);
  in.setZero();
  for (Eigen::Index i = 0; i < B; ++i) {
    const Point& p = points[static_cast<std::size_t>(i)];
    in(0, i) = p.t;
    in(1, i) = p.x;
    in(2, i) = p.v;
    in(0, B + i) = 1.0;
    in(1, 2 * B + i) = 1.0;
  }

  inputs_.reserve(L);
  hidden_tangents_.reserve(L - 1);
  for (std::size_t l = 0; l < L; ++l) {
    const auto rows = static_cast<Eigen::Index>(layout_[l].rows);
    Eigen::Map<const Eigen::VectorXd> bias(values.data() + store.bias_offset(l), rows);
    Matrix z(rows, 3 * B);
    z.noalias() = weights_[l] * in;
    z.leftCols(B).colwise() += bias;
    inputs_.push_back(std::move(in));
    if (l + 1 == L) {
      output_ = std::move(z);
      break;
    }
    Matrix next(rows, 3 * B);
    auto y = next.leftCols(B).array();
    y = z.leftCols(B).array().tanh();
    const Eigen::ArrayXXd s = 1.0 - y.square();
    next.middleCols(B, B).array() = s * z.middleCols(B, B).array();
    next.rightCols(B).array() = s * z.rightCols(B).array();
    hidden_tangents_.emplace_back(z.rightCols(2 * B));
    in = std::move(next);
  }
}

Evaluation BatchPass::output(std::size_t i) const {
  const auto B = static_cast<Eigen::Index>(batch_);
  const auto k = static_cast<Eigen::Index>(i);
  return {output_(0, k), output_(0, B + k), output_(0, 2 * B + k)};
}

std::vector<ad::Channels> BatchPass::outputs() const {
  std::vector<ad::Channels> out(batch_);
  for (std::size_t i = 0; i < batch_; ++i) {
    const auto e = output(i);
    out[i] = {e.f, e.f_t, e.f_x};
  }
  return out;
}

void BatchPass::backward(std::span<const ad::Adjoint> output_adjoints,
                         std::span<double> gradient) const {
  if (output_adjoints.size() != batch_) {
    throw std::invalid_argument("BatchPass::backward: adjoint count mismatch");
  }
  const auto B = static_cast<Eigen::Index>(batch_);
  Matrix g(1, 3 * B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& a = output_adjoints[static_cast<std::size_t>(i)];
    g(0, i) = a.primal;
    g(0, B + i) = a.tangent_t;
    g(0, 2 * B + i) = a.tangent_x;
  }

  for (std::size_t l = layout_.size(); l-- > 0;) {
    const auto rows = static_cast<Eigen::Index>(layout_[l].rows);
    const auto cols = static_cast<Eigen::Index>(layout_[l].cols);
    Eigen::Map<RowMatrix> gw(gradient.data() + weight_offsets_[l], rows, cols);
    Eigen::Map<Eigen::VectorXd> gb(gradient.data() + weight_offsets_[l] + rows * cols, rows);
    gw.noalias() += g * inputs_[l].transpose();
    gb += g.leftCols(B).rowwise().sum();
    if (l == 0) break;

    // Back through tanh of layer l-1: A = tanh(Z), A_c = s * Z_c.
    Matrix ga(cols, 3 * B);
    ga.noalias() = weights_[l].transpose() * g;
    const auto y = inputs_[l].leftCols(B).array();
    const Eigen::ArrayXXd s = 1.0 - y.square();
    const auto& zc = hidden_tangents_[l - 1];
    Matrix next(cols, 3 * B);
    next.leftCols(B).array() =
        s * ga.leftCols(B).array() -
        2.0 * y * s *
            (ga.middleCols(B, B).array() * zc.leftCols(B).array() +
             ga.rightCols(B).array() * zc.rightCols(B).array());
    next.middleCols(B, B).array() = s * ga.middleCols(B, B).array();
    next.rightCols(B).array() = s * ga.rightCols(B).array();
    g = std::move(next);
  }
}

std::vector<ad::TracedValue> forward_traced(const ad::ParameterStore& store,
                                            const NetworkConfig& config,
                                            std::span<const Point> points) {
  ad::Tape& tape = ad::active_tape();
  auto pass = std::make_unique<BatchPass>(store, config, points);
  const auto outs = pass->outputs();
  return tape.add_block(std::move(pass), outs);
}

std::vector<Evaluation> evaluate_grid(const ad::ParameterStore& store,
                                      const NetworkConfig& config,
                                      std::span<const Point> points) {
  constexpr std::size_t kChunk = 4096;
  std::vector<Evaluation> out;
  out.reserve(points.size());
  for (std::size_t start = 0; start < points.size(); start += kChunk) {
    const auto chunk = points.subspan(start, std::min(kChunk, points.size() - start));
    const BatchPass pass(store, config, chunk);
    for (std::size_t i = 0; i < pass.size(); ++i) out.push_back(pass.output(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json checkpoint_to_json(const ad::ParameterStore& store,
                                  const NetworkConfig& config) {
  check_layout(store, config);
  nlohmann::json doc;
  doc["widths"] = config.layer_widths;
  doc["seed"] = config.seed;
  doc["layers"] = nlohmann::json::array();
  const auto values = store.values();
  for (std::size_t l = 0; l < store.layout().size(); ++l) {
    const auto& shape = store.layout()[l];
    const auto w0 = values.begin() + static_cast<std::ptrdiff_t>(store.weight_offset(l));
    const auto b0 = values.begin() + static_cast<std::ptrdiff_t>(store.bias_offset(l));
    doc["layers"].push_back(
        {{"w", std::vector<double>(w0, w0 + static_cast<std::ptrdiff_t>(shape.rows * shape.cols))},
         {"b", std::vector<double>(b0, b0 + static_cast<std::ptrdiff_t>(shape.rows))}});
  }
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  Checkpoint cp;
  cp.config.layer_widths = doc.at("widths").get<std::vector<std::size_t>>();
  cp.config.seed = doc.at("seed").get<std::uint64_t>();
  cp.store = ad::ParameterStore(cp.config.layout());
  const auto& layers = doc.at("layers");
  if (layers.size() != cp.store.layout().size()) {
    throw std::invalid_argument("checkpoint: layer count does not match widths");
  }
  auto values = cp.store.values();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& shape = cp.store.layout()[l];
    const auto w = layers[l].at("w").get<std::vector<double>>();
    const auto b = layers[l].at("b").get<std::vector<double>>();
    if (w.size() != shape.rows * shape.cols || b.size() != shape.rows) {
      throw std::invalid_argument("checkpoint: layer " + std::to_string(l) +
                                  " has the wrong shape");
    }
    std::copy(w.begin(), w.end(), values.begin() + static_cast<std::ptrdiff_t>(cp.store.weight_offset(l)));
    std::copy(b.begin(), b.end(), values.begin() + static_cast<std::ptrdiff_t>(cp.store.bias_offset(l)));
  }
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore& store,
                     const NetworkConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(store, config).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace ltpinn::mlp
