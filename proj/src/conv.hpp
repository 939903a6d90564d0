#pragma once

// Single-sample convolution kernels behind conv2d and conv2d_per_sample.

#include <cstddef>

namespace mwdcnn::conv {

struct Geometry {
  std::size_t in_channels;
  std::size_t height;
  std::size_t width;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t padding;

  std::size_t out_height() const { return height + 2 * padding - kernel + 1; }
  std::size_t out_width() const { return width + 2 * padding - kernel + 1; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

/// y = conv(x, w) + b for one sample; `b` may be null.
template <typename T>
void forward(const Geometry& g, const T* x, const T* w, const T* b, T* y);

/// Accumulates gradients for one sample into gx, gw and gb; any of them may
/// be null when not needed.
template <typename T>
void backward(const Geometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb);

}  // namespace mwdcnn::conv
