#pragma once

// Dense NCHW tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Nodes produced by an
// operation keep references to their inputs and a backward rule; calling
// backward() on a scalar result collects every reachable operation into a
// Tape ordered by creation and runs the rules once each, in reverse.
//
// Elements of operation results are immutable. Only leaves (parameters and
// inputs built with Tensor::from/zeros) expose mutable storage, which the
// optimizer uses between graphs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mwdcnn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised on any incompatible operand shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
class Tensor;

namespace detail {

template <typename T>
class GradSink;

template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out, GradSink<T>& sink)>;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t seq = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<T> backward;

  std::span<T> grad_storage() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Hands a backward rule the gradient accumulators of its inputs. An input
/// that does not require a gradient yields an empty span.
template <typename T>
class GradSink {
 public:
  explicit GradSink(Node<T>& node) : node_(node) {}

  bool wants(std::size_t input) const { return node_.inputs.at(input)->requires_grad; }

  /// Elements of the operation's own result.
  std::span<const T> output() const { return node_.value; }
  /// Elements of one of the operation's inputs.
  std::span<const T> input(std::size_t index) const { return node_.inputs.at(index)->value; }

  std::span<T> operator[](std::size_t input) {
    auto& in = *node_.inputs.at(input);
    if (!in.requires_grad) return {};
    return in.grad_storage();
  }

 private:
  Node<T>& node_;
};

std::uint64_t next_sequence();

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().value.size(); }

  std::span<const T> data() const { return node().value; }
  /// Writable elements; only leaves may be modified.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return node().requires_grad; }
  bool is_leaf() const { return node().leaf; }
  std::string_view op_name() const { return node().op; }

  /// Accumulated gradient; empty until a backward pass reaches this tensor.
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().grad_storage(); }
  void zero_grad();

  /// A new leaf holding a copy of the elements, disconnected from any graph.
  Tensor detach(bool requires_grad = false) const;

  /// Converts element precision; the result is a leaf.
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    const auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>::from(shape(), std::move(out));
  }

  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  detail::Node<T>& node() const;

  std::shared_ptr<detail::Node<T>> node_;
};

/// Records an operation result. When no input requires a gradient the
/// result carries no backward rule and holds no references to its inputs.
template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> value,
                      const std::vector<Tensor<T>>& inputs, detail::BackwardFn<T> backward);

/// Operations reachable from a root, in record order.
template <typename T>
class Tape {
 public:
  static Tape collect(const Tensor<T>& root);

  std::size_t size() const { return ops_.size(); }
  std::vector<std::string_view> op_names() const;

  /// Seeds the root gradient with `seed` and runs every backward rule once,
  /// in reverse record order. Intermediate gradients are reset first so that
  /// only leaves accumulate across repeated passes.
  void run_backward(const Tensor<T>& root, T seed = T(1)) const;

 private:
  std::vector<detail::Node<T>*> ops_;
};

/// d(loss)/d(leaf) accumulated into every leaf that requires a gradient.
template <typename T>
void backward(const Tensor<T>& loss);

/// While alive, every relu on this thread folds the sign pattern of its input
/// into fingerprint(). Finite-difference checks compare fingerprints to see
/// whether a perturbation moved any activation across the kink at zero.
class ActivationPattern {
 public:
  ActivationPattern();
  ~ActivationPattern();
  ActivationPattern(const ActivationPattern&) = delete;
  ActivationPattern& operator=(const ActivationPattern&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void reset() { hash_ = 0; }

  template <typename T>
  void record(std::span<const T> x);

  /// Innermost live pattern on this thread, or nullptr.
  static ActivationPattern* current();

 private:
  std::uint64_t hash_ = 0;
  ActivationPattern* outer_;
};

/// Test hook: corrupts a backward rule so gradient checks can be shown to
/// fail. Never enabled outside negative-control tests.
enum class Fault { none, relu_backward };
void inject_fault(Fault fault);
Fault active_fault();

}  // namespace mwdcnn
