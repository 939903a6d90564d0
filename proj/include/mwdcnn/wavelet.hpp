#pragma once

// Single-level orthonormal 2-D Haar transform as differentiable operations.
//
// dwt2d maps N x C x H x W to N x 4C x H/2 x W/2 with channel blocks ordered
// [LL | LH | HL | HH], C channels each. For a 2x2 block [a b; c d]:
//   LL = ( a + b + c + d) / 2     LH = (-a - b + c + d) / 2
//   HL = (-a + b - c + d) / 2     HH = ( a - b - c + d) / 2
// The map is orthogonal, so idwt2d is also its transpose and each operation's
// backward rule is the other operation.

#include <cstddef>

#include "mwdcnn/tensor.hpp"

namespace mwdcnn {

enum class Subband : std::size_t { LL = 0, LH = 1, HL = 2, HH = 3 };

/// Channel index of `band` for source channel `channel` in a subband tensor
/// built from `channels` source channels.
constexpr std::size_t subband_channel(Subband band, std::size_t channel, std::size_t channels) {
  return static_cast<std::size_t>(band) * channels + channel;
}

/// Throws ShapeError for odd H or W; pad the input upstream.
template <typename T>
Tensor<T> dwt2d(const Tensor<T>& input);

/// Throws ShapeError when the channel count is not divisible by 4.
template <typename T>
Tensor<T> idwt2d(const Tensor<T>& subbands);

}  // namespace mwdcnn
