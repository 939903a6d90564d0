#include "mwdcnn/accounting.hpp"

namespace mwdcnn {
namespace {

LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
               std::size_t downscale = 1) {
  LayerSpec s;
  s.name = std::move(name);
  s.in = in;
  s.out = out;
  s.kernel = kernel;
  s.downscale = downscale;
  return s;
}

void dense_block(std::vector<LayerSpec>& out, const std::string& prefix, std::size_t channels,
                 std::size_t growth, std::size_t kernel, std::size_t downscale) {
  out.push_back(conv(prefix + ".conv1", channels, growth, kernel, downscale));
  out.push_back(conv(prefix + ".conv2", channels + growth, growth, kernel, downscale));
  out.push_back(conv(prefix + ".conv3", channels + 2 * growth, growth, kernel, downscale));
  out.push_back(conv(prefix + ".fuse", channels + 3 * growth, channels, 1, downscale));
}

}  // namespace

Cost count_params_flops(const std::vector<LayerSpec>& layers, std::size_t height,
                        std::size_t width) {
  Cost total;
  for (const auto& l : layers) {
    const std::uint64_t pixels = (height / l.downscale) * (width / l.downscale);
    const std::uint64_t weights = std::uint64_t(l.in) * l.out * l.kernel * l.kernel;
    const std::uint64_t biases = l.bias ? l.out : 0;
    const std::uint64_t macs = weights * pixels;
    if (l.kind == LayerSpec::Kind::conv) {
      total.params += weights + biases;
      total.flops += 2 * macs;
      continue;
    }
    const std::uint64_t k = l.parallel;
    const std::uint64_t generator_params = (l.in * k + k) + (k * k + k);
    total.params += k * (weights + biases) + generator_params;
    const std::uint64_t generator_macs = l.in * k + k * k;
    const std::uint64_t aggregation_macs = k * (weights + biases);
    total.flops += 2 * (macs + generator_macs + aggregation_macs);
  }
  return total;
}

std::vector<LayerSpec> layer_specs(const ModelConfig& config) {
  const std::size_t in = config.in_channels, base = config.base_channels;
  const std::size_t k = config.kernel_size, g = config.growth();
  std::vector<LayerSpec> out;
  out.push_back(conv("dcb.conv_in", in, base, k));
  LayerSpec dyn = conv("dcb.dynamic", base, base, k);
  dyn.kind = LayerSpec::Kind::dynamic_conv;
  dyn.parallel = config.dyn_kernels;
  out.push_back(dyn);
  out.push_back(conv("dcb.refine", base, base, k));
  dense_block(out, "web1.enhance", 4 * base, g, k, 2);
  dense_block(out, "web2.enhance", 4 * base, g, k, 2);
  dense_block(out, "rb.rdb1", base, g, k, 1);
  dense_block(out, "rb.rdb2", base, g, k, 1);
  out.push_back(conv("rb.refine", base, base, k));
  out.push_back(conv("rb.reconstruct", base, in, k));
  return out;
}

std::size_t layer_count(const ModelConfig& config) {
  std::size_t depth = 0;
  for (const auto& l : layer_specs(config)) depth += l.depth();
  return depth;
}

std::vector<LayerSpec> stacked_with_dynamic(std::size_t in_channels, std::size_t base,
                                            std::size_t kernel, std::size_t parallel) {
  std::vector<LayerSpec> out;
  out.push_back(conv("conv_in", in_channels, base, kernel));
  LayerSpec dyn = conv("dynamic", base, base, kernel);
  dyn.kind = LayerSpec::Kind::dynamic_conv;
  dyn.parallel = parallel;
  out.push_back(dyn);
  out.push_back(conv("refine", base, base, kernel));
  out.push_back(conv("conv_out", base, in_channels, kernel));
  return out;
}

std::vector<LayerSpec> stacked_plain(std::size_t in_channels, std::size_t base,
                                     std::size_t kernel) {
  return {
      conv("conv_in", in_channels, base, kernel), conv("conv2", base, base, kernel),
      conv("conv3", base, base, 1),               conv("conv4", base, base, 1),
      conv("conv5", base, base, kernel),          conv("conv_out", base, in_channels, kernel),
  };
}

}  // namespace mwdcnn
