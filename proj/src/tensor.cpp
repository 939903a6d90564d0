#include "mwdcnn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace mwdcnn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace detail

namespace {

std::atomic<Fault> g_fault{Fault::none};

template <typename T>
std::shared_ptr<detail::Node<T>> new_leaf(Shape shape, std::vector<T> values,
                                          bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " +
                     std::to_string(numel(shape)) + " elements, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = detail::next_sequence();
  return node;
}

}  // namespace

namespace {
thread_local ActivationPattern* t_pattern = nullptr;
}

ActivationPattern::ActivationPattern() : outer_(t_pattern) { t_pattern = this; }
ActivationPattern::~ActivationPattern() { t_pattern = outer_; }
ActivationPattern* ActivationPattern::current() { return t_pattern; }

template <typename T>
void ActivationPattern::record(std::span<const T> x) {
  // Polynomial hash with an odd multiplier: any single flipped sign changes it.
  std::uint64_t h = x.size();
  for (const T v : x) h = h * 0x100000001B3ULL + (v > T(0) ? 1 : 0);
  hash_ = (hash_ ^ h) * 0x9E3779B97F4A7C15ULL + 1;
}

template void ActivationPattern::record<float>(std::span<const float>);
template void ActivationPattern::record<double>(std::span<const double>);

void inject_fault(Fault fault) { g_fault.store(fault); }
Fault active_fault() { return g_fault.load(); }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = mwdcnn::numel(shape);
  return Tensor(new_leaf<T>(std::move(shape), std::vector<T>(n, T(0)), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = mwdcnn::numel(shape);
  return Tensor(new_leaf<T>(std::move(shape), std::vector<T>(n, value), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  return Tensor(new_leaf<T>(std::move(shape), std::move(values), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(new_leaf<T>(Shape{1}, std::vector<T>{value}, requires_grad));
}

template <typename T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = node().shape;
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  return s[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  auto& n = node();
  if (!n.leaf) {
    throw std::logic_error("elements of operation result '" + std::string(n.op) +
                           "' are immutable");
  }
  return n.value;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& n = node();
  if (n.value.size() != 1) {
    throw ShapeError("item() on non-scalar tensor of shape " + shape_string(n.shape));
  }
  return n.value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& n = node();
  if (n.requires_grad) n.grad.assign(n.value.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach(bool requires_grad) const {
  const auto& n = node();
  return Tensor(new_leaf<T>(n.shape, n.value, requires_grad));
}

template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> value,
                      const std::vector<Tensor<T>>& inputs, detail::BackwardFn<T> backward) {
  if (value.size() != numel(shape)) {
    throw ShapeError(std::string(op) + ": result shape " + shape_string(shape) +
                     " does not match " + std::to_string(value.size()) + " elements");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  node->op = op;
  node->seq = detail::next_sequence();
  const bool any_grad = std::any_of(inputs.begin(), inputs.end(),
                                    [](const Tensor<T>& t) { return t.requires_grad(); });
  if (any_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tape<T> Tape<T>::collect(const Tensor<T>& root) {
  Tape tape;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root.node_ptr().get()};
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    if (!node || !seen.insert(node).second) continue;
    if (node->leaf || !node->backward) continue;
    tape.ops_.push_back(node);
    for (const auto& in : node->inputs) stack.push_back(in.get());
  }
  // Creation order is a topological order: inputs always exist before the
  // operation that consumes them.
  std::sort(tape.ops_.begin(), tape.ops_.end(),
            [](const auto* a, const auto* b) { return a->seq < b->seq; });
  return tape;
}

template <typename T>
std::vector<std::string_view> Tape<T>::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(ops_.size());
  for (const auto* op : ops_) names.push_back(op->op);
  return names;
}

template <typename T>
void Tape<T>::run_backward(const Tensor<T>& root, T seed) const {
  for (auto* op : ops_) op->grad.clear();
  auto& root_node = *root.node_ptr();
  auto root_grad = root_node.grad_storage();
  for (auto& g : root_grad) g += seed;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty()) continue;  // no path from the root reached it
    detail::GradSink<T> sink(node);
    node.backward(std::span<const T>(node.grad), sink);
    if (&node != &root_node) {
      node.grad.clear();
      node.grad.shrink_to_fit();
    }
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss does not depend on any tensor requiring grad");
  }
  Tape<T>::collect(loss).run_backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_result(std::string_view, Shape, std::vector<float>,
                                   const std::vector<Tensor<float>>&,
                                   detail::BackwardFn<float>);
template Tensor<double> make_result(std::string_view, Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&,
                                    detail::BackwardFn<double>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace mwdcnn
