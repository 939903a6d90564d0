#pragma once

// The three-stage denoiser: dynamic convolution block (DCB), two wavelet
// transform and enhancement blocks (WEB), and the residual block (RB) that
// predicts a noise map and subtracts it from the input.

#include <array>
#include <cstddef>
#include <cstdint>

#include "mwdcnn/layers.hpp"

namespace mwdcnn {

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t base_channels = 64;
  std::size_t kernel_size = 5;
  std::size_t dyn_kernels = 4;
  /// Dense-block growth rate; 0 means "same as base_channels".
  std::size_t fe_growth = 0;
  int precision = 32;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  /// Adds the first convolution's output to the dynamic convolution output.
  bool additive_fusion = false;

  std::size_t growth() const { return fe_growth == 0 ? base_channels : fe_growth; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
class Mwdcnn {
 public:
  struct DynamicBlock {
    Conv2d<T> conv_in;       // in -> base
    DynamicConv<T> dynamic;  // base -> base
    Conv2d<T> refine;        // base -> base, followed by ReLU
  };
  struct WaveletBlock {
    ResidualDenseBlock<T> enhance;  // on 4 * base subband channels
  };
  struct ResidualBlock {
    ResidualDenseBlock<T> rdb1;
    ResidualDenseBlock<T> rdb2;
    Conv2d<T> refine;       // base -> base, followed by ReLU
    Conv2d<T> reconstruct;  // base -> in, the noise map
  };

  /// Seeded initialization; config.precision is set to match T.
  static Mwdcnn create(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  Tensor<T> dcb_forward(const Tensor<T>& noisy) const;
  /// stage is 1 or 2.
  Tensor<T> web_forward(int stage, const Tensor<T>& x) const;
  Tensor<T> rb_forward(const Tensor<T>& web_out, const Tensor<T>& noisy) const;
  /// Clean estimate for N x Cin x H x W input with even H, W >= 8.
  Tensor<T> forward(const Tensor<T>& noisy) const;

  /// Every trainable tensor in a fixed order with dotted names.
  NamedParameters<T> parameters() const;
  std::size_t parameter_count() const;

  /// Deep copy with independent parameter storage.
  Mwdcnn clone() const;

  DynamicBlock dcb;
  std::array<WaveletBlock, 2> web;
  ResidualBlock rb;

 private:
  ModelConfig config_;
};

}  // namespace mwdcnn
