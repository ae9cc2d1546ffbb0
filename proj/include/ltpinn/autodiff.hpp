#pragma once

// Reverse-mode differentiation over values that also carry forward-mode
// tangents in the two input directions t and x.
//
// Every TracedValue holds three channels: the primal and its directional
// derivatives along t and x. A Tape records how each value was produced, and
// the reverse sweep differentiates all three channels with respect to the
// network parameters. This is what lets a loss built from df/dt and df/dx be
// differentiated exactly with respect to the weights.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <vector>

namespace ltpinn::ad {

struct LayerShape {
  std::size_t rows = 0;  // fan_out; also the bias length
  std::size_t cols = 0;  // fan_in

  std::size_t size() const { return rows * cols + rows; }
  bool operator==(const LayerShape&) const = default;
};

// Cache-line aligned buffers. Vectorised kernels peel differently depending
// on the start address, so a heap-placed buffer would make results depend on
// allocation history.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// Flat storage for all weights and biases, with a gradient buffer of the
/// same length. Per layer the weight matrix is stored row-major, followed by
/// the bias vector.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(std::vector<LayerShape> layout);

  std::size_t size() const { return values_.size(); }
  const std::vector<LayerShape>& layout() const { return layout_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> gradient() { return gradient_; }
  std::span<const double> gradient() const { return gradient_; }

  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  void zero_grad();

 private:
  std::vector<LayerShape> layout_;
  std::vector<std::size_t> offsets_;
  AlignedBuffer values_;
  AlignedBuffer gradient_;
};

enum class InputRole { t, x, v, constant };

struct Channels {
  double primal = 0.0;
  double tangent_t = 0.0;
  double tangent_x = 0.0;
};

/// Adjoint of the three channels of one node.
using Adjoint = Channels;

class Tape;

class TracedValue {
 public:
  TracedValue() = default;

  double primal() const { return value_.primal; }
  double tangent_t() const { return value_.tangent_t; }
  double tangent_x() const { return value_.tangent_x; }
  const Channels& channels() const { return value_; }
  std::uint32_t node() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }

 private:
  friend class Tape;
  TracedValue(Channels value, std::uint32_t node, std::uint64_t tape_id)
      : value_(value), node_(node), tape_id_(tape_id) {}

  Channels value_;
  std::uint32_t node_ = 0;
  std::uint64_t tape_id_ = 0;
};

/// A group of tape leaves produced by one external computation, e.g. a batched
/// network pass. Its outputs may depend only on parameters, never on other
/// tape nodes, so the tape runs block backward passes after the scalar sweep.
class TapeBlock {
 public:
  virtual ~TapeBlock() = default;
  /// Accumulate d(loss)/d(theta) into `gradient` given the adjoints of the
  /// block's outputs, in output order.
  virtual void backward(std::span<const Adjoint> output_adjoints,
                        std::span<double> gradient) const = 0;
};

enum class Op : std::uint8_t {
  leaf,
  param,
  external,
  add,
  sub,
  mul,
  div,
  square,
  add_const,
  scale,
  neg,
  tanh,
  tangent_t,
  tangent_x,
  sum,
  weighted_sum,
};

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  TracedValue leaf(Channels value);
  TracedValue param(const ParameterStore& store, std::size_t index);
  TracedValue unary(Op op, const TracedValue& a, double c = 0.0);
  TracedValue binary(Op op, const TracedValue& a, const TracedValue& b);
  TracedValue nary(std::span<const TracedValue> terms,
                   std::span<const double> weights);

  /// Registers a block and returns one leaf per output, in order.
  std::vector<TracedValue> add_block(std::unique_ptr<TapeBlock> block,
                                     std::span<const Channels> outputs);

  /// Reverse sweep from `loss`; accumulates into store.gradient(). The tape is
  /// left untouched, so the sweep can be replayed from other nodes.
  void backward(const TracedValue& loss, ParameterStore& store);

  /// Adjoint of a node as left by the most recent backward().
  Adjoint adjoint(const TracedValue& value) const;

 private:
  struct Node {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    double c;
  };
  struct BlockRecord {
    std::unique_ptr<TapeBlock> block;
    std::uint32_t first;
    std::uint32_t count;
  };

  void check_owned(const TracedValue& v) const;
  TracedValue push(Node node, Channels value);

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<Channels> values_;
  std::vector<Adjoint> adjoints_;
  std::vector<std::uint32_t> operands_;
  std::vector<double> coefficients_;
  std::vector<BlockRecord> blocks_;
};

/// Makes a tape the thread's active tape for the guard's lifetime.
class ActiveTape {
 public:
  explicit ActiveTape(Tape& tape);
  ActiveTape(const ActiveTape&) = delete;
  ActiveTape& operator=(const ActiveTape&) = delete;
  ~ActiveTape();

 private:
  Tape* previous_;
};

/// The active tape; throws std::logic_error when none is active.
Tape& active_tape();
bool has_active_tape();

TracedValue lift_input(double value, InputRole role);
TracedValue lift_param(const ParameterStore& store, std::size_t index);

TracedValue operator+(const TracedValue& a, const TracedValue& b);
TracedValue operator-(const TracedValue& a, const TracedValue& b);
TracedValue operator*(const TracedValue& a, const TracedValue& b);
TracedValue operator/(const TracedValue& a, const TracedValue& b);
TracedValue operator-(const TracedValue& a);
TracedValue operator+(const TracedValue& a, double c);
TracedValue operator+(double c, const TracedValue& a);
TracedValue operator-(const TracedValue& a, double c);
TracedValue operator-(double c, const TracedValue& a);
TracedValue operator*(const TracedValue& a, double c);
TracedValue operator*(double c, const TracedValue& a);
TracedValue operator/(const TracedValue& a, double c);

TracedValue square(const TracedValue& a);
TracedValue tanh(const TracedValue& a);

/// The t- (or x-) tangent of `a` as a traced value of its own. Its tangent
/// channels are zero: second input derivatives are not tracked.
TracedValue tangent_t(const TracedValue& a);
TracedValue tangent_x(const TracedValue& a);

TracedValue sum(std::span<const TracedValue> terms);
TracedValue weighted_sum(std::span<const TracedValue> terms,
                         std::span<const double> weights);

void backward(const TracedValue& loss, ParameterStore& store);

/// Central differences (fn(theta + h e_i) - fn(theta - h e_i)) / 2h.
std::vector<double> finite_diff_gradient(
    const std::function<double(std::span<const double>)>& fn,
    const ParameterStore& store, double h);

}  // namespace ltpinn::ad
