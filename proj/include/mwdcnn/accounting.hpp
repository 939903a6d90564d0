#pragma once

// Analytic parameter and FLOP counts for layer stacks.
//
// FLOPs are twice the multiply-accumulate count. A plain convolution costs
// Cin*Cout*k*k MACs per output pixel. A dynamic convolution is charged for one
// aggregated convolution, the kernel aggregation (K * weight count) and the
// two 1x1 layers of its weight generator; its parameters include all K
// kernels and the generator.

#include <cstdint>
#include <string>
#include <vector>

#include "mwdcnn/model.hpp"

namespace mwdcnn {

struct LayerSpec {
  enum class Kind { conv, dynamic_conv };

  std::string name;
  Kind kind = Kind::conv;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 1;
  bool bias = true;
  /// Parallel kernels of a dynamic convolution.
  std::size_t parallel = 1;
  /// Spatial downscale relative to the network input (2 inside wavelet blocks).
  std::size_t downscale = 1;

  /// Depth contribution: 1 for a convolution, 3 for a dynamic convolution
  /// (two generator layers plus the convolution itself).
  std::size_t depth() const { return kind == Kind::conv ? 1 : 3; }
};

struct Cost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

Cost count_params_flops(const std::vector<LayerSpec>& layers, std::size_t height,
                        std::size_t width);

/// Layer list of the full denoiser in forward order.
std::vector<LayerSpec> layer_specs(const ModelConfig& config);

/// Convolutional depth of the full denoiser (23 at every valid config).
std::size_t layer_count(const ModelConfig& config);

/// Ablation stack: conv in -> dynamic conv -> conv -> conv out.
std::vector<LayerSpec> stacked_with_dynamic(std::size_t in_channels, std::size_t base = 64,
                                            std::size_t kernel = 5, std::size_t parallel = 4);

/// Ablation stack of six plain convolutions:
/// 5x5 in -> 5x5 -> 1x1 -> 1x1 -> 5x5 -> 5x5 out.
std::vector<LayerSpec> stacked_plain(std::size_t in_channels, std::size_t base = 64,
                                     std::size_t kernel = 5);

}  // namespace mwdcnn
