#pragma once

// Building blocks of the denoiser: plain convolution, the attention weight
// generator, dynamic convolution and the residual dense block.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mwdcnn/rng.hpp"
#include "mwdcnn/tensor.hpp"

namespace mwdcnn {

template <typename T>
using NamedParameters = std::vector<std::pair<std::string, Tensor<T>>>;

/// Weight initialization. `kaiming` draws N(0, 2 / fan_in) for weights that
/// feed a ReLU; `lecun` draws N(0, 1 / fan_in) for the rest. Biases start at 0.
enum class Init { kaiming, lecun, zeros };

template <typename T>
Tensor<T> init_weight(Shape shape, std::size_t fan_in, Init init, CounterRng& rng);

/// Same-padded convolution with bias.
template <typename T>
struct Conv2d {
  Tensor<T> weight;  // Cout x Cin x k x k
  Tensor<T> bias;    // Cout

  static Conv2d create(std::size_t in, std::size_t out, std::size_t kernel, Init init,
                       CounterRng& rng);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel_size() const { return weight.dim(2); }

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParameters<T>& out) const;
};

/// Pool -> 1x1 conv + ReLU -> 1x1 conv -> softmax; produces N x K attention
/// weights on the simplex.
template <typename T>
struct WeightGenerator {
  Conv2d<T> squeeze;  // Cin -> K
  Conv2d<T> expand;   // K -> K

  static WeightGenerator create(std::size_t in, std::size_t kernels, CounterRng& rng);

  std::size_t kernels() const { return expand.out_channels(); }

  /// Pre-softmax scores, N x K.
  Tensor<T> logits(const Tensor<T>& x) const;
  /// softmax(logits / temperature).
  Tensor<T> forward(const Tensor<T>& x, T temperature = T(1)) const;
  void collect(const std::string& prefix, NamedParameters<T>& out) const;
};

/// Per-sample convex combination of K parallel kernels, applied as one
/// convolution: W_n = sum_i a_ni K_i, b_n = sum_i a_ni b_i, y_n = conv(x_n, W_n) + b_n.
template <typename T>
struct DynamicConv {
  Tensor<T> kernels;  // K x Cout x Cin x k x k
  Tensor<T> biases;   // K x Cout
  WeightGenerator<T> generator;
  T temperature = T(1);

  static DynamicConv create(std::size_t in, std::size_t out, std::size_t kernel,
                            std::size_t parallel, CounterRng& rng);

  std::size_t parallel_kernels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(2); }
  std::size_t out_channels() const { return kernels.dim(1); }

  Tensor<T> attention(const Tensor<T>& x) const { return generator.forward(x, temperature); }
  /// Applies the convolution with externally supplied N x K attention.
  Tensor<T> apply(const Tensor<T>& x, const Tensor<T>& attention) const;
  Tensor<T> forward(const Tensor<T>& x) const { return apply(x, attention(x)); }
  void collect(const std::string& prefix, NamedParameters<T>& out) const;
};

/// Three densely connected conv + ReLU layers of `growth` channels, a 1x1
/// fusion back to the input width, and a local residual connection.
template <typename T>
struct ResidualDenseBlock {
  Conv2d<T> conv1;  // C -> g
  Conv2d<T> conv2;  // C + g -> g
  Conv2d<T> conv3;  // C + 2g -> g
  Conv2d<T> fuse;   // C + 3g -> C, 1x1

  static ResidualDenseBlock create(std::size_t channels, std::size_t growth,
                                   std::size_t kernel, CounterRng& rng);

  std::size_t channels() const { return fuse.out_channels(); }

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParameters<T>& out) const;
};

/// Sets every element of every listed tensor to zero.
template <typename T>
void zero_parameters(const NamedParameters<T>& params);

}  // namespace mwdcnn
