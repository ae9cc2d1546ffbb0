#include "ltpinn/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

namespace ltpinn::ad {

// ---------------------------------------------------------------------------
// ParameterStore

ParameterStore::ParameterStore(std::vector<LayerShape> layout)
    : layout_(std::move(layout)) {
  std::size_t total = 0;
  offsets_.reserve(layout_.size());
  for (const auto& shape : layout_) {
    offsets_.push_back(total);
    total += shape.size();
  }
  values_.assign(total, 0.0);
  gradient_.assign(total, 0.0);
}

std::size_t ParameterStore::weight_offset(std::size_t layer) const {
  return offsets_.at(layer);
}

std::size_t ParameterStore::bias_offset(std::size_t layer) const {
  return offsets_.at(layer) + layout_[layer].rows * layout_[layer].cols;
}

void ParameterStore::zero_grad() {
  std::fill(gradient_.begin(), gradient_.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Tape

namespace {

std::atomic<std::uint64_t> next_tape_id{1};
thread_local Tape* current_tape = nullptr;

constexpr std::uint32_t kNoNode = std::numeric_limits<std::uint32_t>::max();

}  // namespace

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Tape::~Tape() = default;

void Tape::check_owned(const TracedValue& v) const {
  if (v.tape_id() != id_ || v.node() >= nodes_.size()) {
    throw std::logic_error("traced value does not belong to this tape");
  }
}

TracedValue Tape::push(Node node, Channels value) {
  if (nodes_.size() >= kNoNode) {
    throw std::length_error("tape node limit exceeded");
  }
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(node);
  values_.push_back(value);
  return TracedValue(value, index, id_);
}

TracedValue Tape::leaf(Channels value) {
  return push({Op::leaf, kNoNode, kNoNode, 0.0}, value);
}

TracedValue Tape::param(const ParameterStore& store, std::size_t index) {
  if (index >= store.size()) {
    throw std::out_of_range("parameter index " + std::to_string(index) +
                            " outside store of size " +
                            std::to_string(store.size()));
  }
  return push({Op::param, static_cast<std::uint32_t>(index), kNoNode, 0.0},
              {store.values()[index], 0.0, 0.0});
}

TracedValue Tape::unary(Op op, const TracedValue& a, double c) {
  check_owned(a);
  const Channels& x = values_[a.node()];
  Channels out;
  switch (op) {
    case Op::square:
      out = {x.primal * x.primal, 2.0 * x.primal * x.tangent_t,
             2.0 * x.primal * x.tangent_x};
      break;
    case Op::add_const:
      out = {x.primal + c, x.tangent_t, x.tangent_x};
      break;
    case Op::scale:
      out = {c * x.primal, c * x.tangent_t, c * x.tangent_x};
      break;
    case Op::neg:
      out = {-x.primal, -x.tangent_t, -x.tangent_x};
      break;
    case Op::tanh: {
      const double y = std::tanh(x.primal);
      const double s = 1.0 - y * y;
      out = {y, s * x.tangent_t, s * x.tangent_x};
      break;
    }
    case Op::tangent_t:
      out = {x.tangent_t, 0.0, 0.0};
      break;
    case Op::tangent_x:
      out = {x.tangent_x, 0.0, 0.0};
      break;
    default:
      throw std::logic_error("not a unary op");
  }
  return push({op, a.node(), kNoNode, c}, out);
}

TracedValue Tape::binary(Op op, const TracedValue& a, const TracedValue& b) {
  check_owned(a);
  check_owned(b);
  const Channels& x = values_[a.node()];
  const Channels& y = values_[b.node()];
  Channels out;
  switch (op) {
    case Op::add:
      out = {x.primal + y.primal, x.tangent_t + y.tangent_t,
             x.tangent_x + y.tangent_x};
      break;
    case Op::sub:
      out = {x.primal - y.primal, x.tangent_t - y.tangent_t,
             x.tangent_x - y.tangent_x};
      break;
    case Op::mul:
      out = {x.primal * y.primal, x.tangent_t * y.primal + x.primal * y.tangent_t,
             x.tangent_x * y.primal + x.primal * y.tangent_x};
      break;
    case Op::div: {
      if (y.primal == 0.0) {
        throw std::domain_error("division by a traced value with zero primal");
      }
      const double q = x.primal / y.primal;
      out = {q, (x.tangent_t - q * y.tangent_t) / y.primal,
             (x.tangent_x - q * y.tangent_x) / y.primal};
      break;
    }
    default:
      throw std::logic_error("not a binary op");
  }
  return push({op, a.node(), b.node(), 0.0}, out);
}

TracedValue Tape::nary(std::span<const TracedValue> terms,
                       std::span<const double> weights) {
  const bool weighted = !weights.empty();
  if (weighted && weights.size() != terms.size()) {
    throw std::invalid_argument("weighted_sum: weights and terms differ in length");
  }
  const auto first = static_cast<std::uint32_t>(operands_.size());
  Channels out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    check_owned(terms[i]);
    const Channels& x = values_[terms[i].node()];
    const double w = weighted ? weights[i] : 1.0;
    out.primal += w * x.primal;
    out.tangent_t += w * x.tangent_t;
    out.tangent_x += w * x.tangent_x;
    operands_.push_back(terms[i].node());
    if (weighted) coefficients_.push_back(weights[i]);
  }
  // For weighted sums `c` holds the offset into coefficients_.
  const double coeff_offset =
      weighted ? static_cast<double>(coefficients_.size() - terms.size()) : 0.0;
  return push({weighted ? Op::weighted_sum : Op::sum, first,
               static_cast<std::uint32_t>(terms.size()), coeff_offset},
              out);
}

std::vector<TracedValue> Tape::add_block(std::unique_ptr<TapeBlock> block,
                                         std::span<const Channels> outputs) {
  const auto first = static_cast<std::uint32_t>(nodes_.size());
  const auto block_id = static_cast<std::uint32_t>(blocks_.size());
  std::vector<TracedValue> leaves;
  leaves.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    leaves.push_back(push(
        {Op::external, block_id, static_cast<std::uint32_t>(i), 0.0}, outputs[i]));
  }
  blocks_.push_back(
      {std::move(block), first, static_cast<std::uint32_t>(outputs.size())});
  return leaves;
}

void Tape::backward(const TracedValue& loss, ParameterStore& store) {
  check_owned(loss);
  auto grad = store.gradient();
  adjoints_.assign(nodes_.size(), Adjoint{});
  adjoints_[loss.node()].primal = 1.0;

  for (std::size_t n = loss.node() + 1; n-- > 0;) {
    const Adjoint g = adjoints_[n];
    if (g.primal == 0.0 && g.tangent_t == 0.0 && g.tangent_x == 0.0) continue;
    const Node& node = nodes_[n];
    switch (node.op) {
      case Op::leaf:
      case Op::external:
        break;
      case Op::param:
        if (node.a >= grad.size()) {
          throw std::out_of_range("parameter store does not match the tape");
        }
        grad[node.a] += g.primal;
        break;
      case Op::add: {
        Adjoint& ga = adjoints_[node.a];
        ga.primal += g.primal;
        ga.tangent_t += g.tangent_t;
        ga.tangent_x += g.tangent_x;
        Adjoint& gb = adjoints_[node.b];
        gb.primal += g.primal;
        gb.tangent_t += g.tangent_t;
        gb.tangent_x += g.tangent_x;
        break;
      }
      case Op::sub: {
        Adjoint& ga = adjoints_[node.a];
        ga.primal += g.primal;
        ga.tangent_t += g.tangent_t;
        ga.tangent_x += g.tangent_x;
        Adjoint& gb = adjoints_[node.b];
        gb.primal -= g.primal;
        gb.tangent_t -= g.tangent_t;
        gb.tangent_x -= g.tangent_x;
        break;
      }
      case Op::mul: {
        const Channels& x = values_[node.a];
        const Channels& y = values_[node.b];
        Adjoint& ga = adjoints_[node.a];
        ga.primal += g.primal * y.primal + g.tangent_t * y.tangent_t +
                     g.tangent_x * y.tangent_x;
        ga.tangent_t += g.tangent_t * y.primal;
        ga.tangent_x += g.tangent_x * y.primal;
        Adjoint& gb = adjoints_[node.b];
        gb.primal += g.primal * x.primal + g.tangent_t * x.tangent_t +
                     g.tangent_x * x.tangent_x;
        gb.tangent_t += g.tangent_t * x.primal;
        gb.tangent_x += g.tangent_x * x.primal;
        break;
      }
      case Op::div: {
        // q = a/b, q_c = (a_c - q b_c)/b for c in {t, x}
        const Channels& y = values_[node.b];
        const Channels& q = values_[n];
        const double inv = 1.0 / y.primal;
        Adjoint& ga = adjoints_[node.a];
        ga.primal += inv * (g.primal - g.tangent_t * y.tangent_t * inv -
                            g.tangent_x * y.tangent_x * inv);
        ga.tangent_t += g.tangent_t * inv;
        ga.tangent_x += g.tangent_x * inv;
        Adjoint& gb = adjoints_[node.b];
        gb.primal += -g.primal * q.primal * inv -
                     (g.tangent_t * q.tangent_t + g.tangent_x * q.tangent_x) * inv +
                     (g.tangent_t * y.tangent_t + g.tangent_x * y.tangent_x) *
                         q.primal * inv * inv;
        gb.tangent_t -= g.tangent_t * q.primal * inv;
        gb.tangent_x -= g.tangent_x * q.primal * inv;
        break;
      }
      case Op::square: {
        const Channels& x = values_[node.a];
        Adjoint& ga = adjoints_[node.a];
        ga.primal += 2.0 * (g.primal * x.primal + g.tangent_t * x.tangent_t +
                            g.tangent_x * x.tangent_x);
        ga.tangent_t += 2.0 * g.tangent_t * x.primal;
        ga.tangent_x += 2.0 * g.tangent_x * x.primal;
        break;
      }
      case Op::add_const: {
        Adjoint& ga = adjoints_[node.a];
        ga.primal += g.primal;
        ga.tangent_t += g.tangent_t;
        ga.tangent_x += g.tangent_x;
        break;
      }
      case Op::scale: {
        Adjoint& ga = adjoints_[node.a];
        ga.primal += node.c * g.primal;
        ga.tangent_t += node.c * g.tangent_t;
        ga.tangent_x += node.c * g.tangent_x;
        break;
      }
      case Op::neg: {
        Adjoint& ga = adjoints_[node.a];
        ga.primal -= g.primal;
        ga.tangent_t -= g.tangent_t;
        ga.tangent_x -= g.tangent_x;
        break;
      }
      case Op::tanh: {
        const Channels& x = values_[node.a];
        const double y = values_[n].primal;
        const double s = 1.0 - y * y;
        const double ds = -2.0 * y * s;
        Adjoint& ga = adjoints_[node.a];
        ga.primal += g.primal * s +
                     ds * (g.tangent_t * x.tangent_t + g.tangent_x * x.tangent_x);
        ga.tangent_t += g.tangent_t * s;
        ga.tangent_x += g.tangent_x * s;
        break;
      }
      case Op::tangent_t:
        adjoints_[node.a].tangent_t += g.primal;
        break;
      case Op::tangent_x:
        adjoints_[node.a].tangent_x += g.primal;
        break;
      case Op::sum:
        for (std::uint32_t i = 0; i < node.b; ++i) {
          Adjoint& ga = adjoints_[operands_[node.a + i]];
          ga.primal += g.primal;
          ga.tangent_t += g.tangent_t;
          ga.tangent_x += g.tangent_x;
        }
        break;
      case Op::weighted_sum: {
        const auto coeff = static_cast<std::size_t>(node.c);
        for (std::uint32_t i = 0; i < node.b; ++i) {
          const double w = coefficients_[coeff + i];
          Adjoint& ga = adjoints_[operands_[node.a + i]];
          ga.primal += w * g.primal;
          ga.tangent_t += w * g.tangent_t;
          ga.tangent_x += w * g.tangent_x;
        }
        break;
      }
    }
  }

  // Blocks only read parameters, so their order relative to the scalar sweep
  // does not matter; reverse registration order keeps the sum order fixed.
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    const std::span<const Adjoint> out(adjoints_.data() + it->first, it->count);
    const bool touched = std::any_of(out.begin(), out.end(), [](const Adjoint& a) {
      return a.primal != 0.0 || a.tangent_t != 0.0 || a.tangent_x != 0.0;
    });
    if (touched) it->block->backward(out, grad);
  }
}

Adjoint Tape::adjoint(const TracedValue& value) const {
  check_owned(value);
  if (adjoints_.size() <= value.node()) return {};
  return adjoints_[value.node()];
}

// ---------------------------------------------------------------------------
// Active tape and free functions

ActiveTape::ActiveTape(Tape& tape) : previous_(current_tape) {
  current_tape = &tape;
}

ActiveTape::~ActiveTape() { current_tape = previous_; }

Tape& active_tape() {
  if (current_tape == nullptr) {
    throw std::logic_error("no active tape: wrap the computation in ad::ActiveTape");
  }
  return *current_tape;
}

bool has_active_tape() { return current_tape != nullptr; }

TracedValue lift_input(double value, InputRole role) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("lift_input: value must be finite");
  }
  Channels c{value, 0.0, 0.0};
  if (role == InputRole::t) c.tangent_t = 1.0;
  if (role == InputRole::x) c.tangent_x = 1.0;
  return active_tape().leaf(c);
}

TracedValue lift_param(const ParameterStore& store, std::size_t index) {
  return active_tape().param(store, index);
}

TracedValue operator+(const TracedValue& a, const TracedValue& b) {
  return active_tape().binary(Op::add, a, b);
}
TracedValue operator-(const TracedValue& a, const TracedValue& b) {
  return active_tape().binary(Op::sub, a, b);
}
TracedValue operator*(const TracedValue& a, const TracedValue& b) {
  return active_tape().binary(Op::mul, a, b);
}
TracedValue operator/(const TracedValue& a, const TracedValue& b) {
  return active_tape().binary(Op::div, a, b);
}
TracedValue operator-(const TracedValue& a) {
  return active_tape().unary(Op::neg, a);
}
TracedValue operator+(const TracedValue& a, double c) {
  return active_tape().unary(Op::add_const, a, c);
}
TracedValue operator+(double c, const TracedValue& a) { return a + c; }
TracedValue operator-(const TracedValue& a, double c) { return a + (-c); }
TracedValue operator-(double c, const TracedValue& a) { return (-a) + c; }
TracedValue operator*(const TracedValue& a, double c) {
  return active_tape().unary(Op::scale, a, c);
}
TracedValue operator*(double c, const TracedValue& a) { return a * c; }
TracedValue operator/(const TracedValue& a, double c) {
  if (c == 0.0) throw std::domain_error("division by zero");
  return a * (1.0 / c);
}

TracedValue square(const TracedValue& a) {
  return active_tape().unary(Op::square, a);
}
TracedValue tanh(const TracedValue& a) { return active_tape().unary(Op::tanh, a); }
TracedValue tangent_t(const TracedValue& a) {
  return active_tape().unary(Op::tangent_t, a);
}
TracedValue tangent_x(const TracedValue& a) {
  return active_tape().unary(Op::tangent_x, a);
}

TracedValue sum(std::span<const TracedValue> terms) {
  return active_tape().nary(terms, {});
}

TracedValue weighted_sum(std::span<const TracedValue> terms,
                         std::span<const double> weights) {
  if (weights.size() != terms.size()) {
    throw std::invalid_argument("weighted_sum: weights and terms differ in length");
  }
  return active_tape().nary(terms, weights);
}

void backward(const TracedValue& loss, ParameterStore& store) {
  Tape& tape = active_tape();
  if (loss.tape_id() != tape.id()) {
    throw std::logic_error("backward: loss is not on the active tape");
  }
  tape.backward(loss, store);
}

std::vector<double> finite_diff_gradient(
    const std::function<double(std::span<const double>)>& fn,
    const ParameterStore& store, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
  std::vector<double> theta(store.values().begin(), store.values().end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = fn(theta);
    theta[i] = saved - h;
    const double down = fn(theta);
    theta[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace ltpinn::ad
