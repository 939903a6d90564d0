#pragma once

// Differentiable primitives over NCHW tensors.

#include <vector>

#include "mwdcnn/tensor.hpp"

namespace mwdcnn {

/// How conv2d evaluates. `direct` is the nested-loop reference; `gemm`
/// lowers each sample to im2col + matrix multiply through the kernel table.
enum class ConvAlgorithm { direct, gemm };

void set_conv_algorithm(ConvAlgorithm algo);
ConvAlgorithm conv_algorithm();

/// Stride-1 cross-correlation with zero padding.
/// input N x Cin x H x W, weight Cout x Cin x k x k, bias Cout (may be
/// undefined). Output is N x Cout x (H + 2p - k + 1) x (W + 2p - k + 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t padding);

/// conv2d with "same" padding (k - 1) / 2 for odd k.
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Same-padded convolution where every sample has its own kernel:
/// weight N x Cout x Cin x k x k, bias N x Cout.
template <typename T>
Tensor<T> conv2d_per_sample(const Tensor<T>& input, const Tensor<T>& weight,
                            const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Row-wise softmax of an N x K tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input);

/// N x C x H x W -> N x C spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Stacks 4-D tensors along the channel axis, in argument order.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// (M x K) . (K x N) -> M x N.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

}  // namespace mwdcnn
