#include "mwdcnn/model.hpp"

#include <stdexcept>
#include <string>

#include "mwdcnn/ops.hpp"
#include "mwdcnn/wavelet.hpp"

namespace mwdcnn {

void ModelConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) {
    throw std::invalid_argument("in_channels must be 1 or 3, got " + std::to_string(in_channels));
  }
  if (base_channels < 4 || base_channels % 4 != 0) {
    throw std::invalid_argument("base_channels must be a multiple of 4 and at least 4, got " +
                                std::to_string(base_channels));
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw std::invalid_argument("kernel_size must be odd, got " + std::to_string(kernel_size));
  }
  if (dyn_kernels == 0) throw std::invalid_argument("dyn_kernels must be positive");
  if (precision != 32 && precision != 64) {
    throw std::invalid_argument("precision must be 32 or 64, got " + std::to_string(precision));
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

template <typename T>
Mwdcnn<T> Mwdcnn<T>::create(ModelConfig config) {
  config.precision = sizeof(T) == 4 ? 32 : 64;
  config.validate();
  const std::size_t in = config.in_channels;
  const std::size_t base = config.base_channels;
  const std::size_t k = config.kernel_size;
  const std::size_t g = config.growth();

  Mwdcnn m;
  m.config_ = config;
  std::uint64_t stream = 0;
  auto next_rng = [&] { return CounterRng(derive_key(config.seed, {0x696e6974ULL, stream++})); };

  auto rng = next_rng();
  m.dcb.conv_in = Conv2d<T>::create(in, base, k, Init::lecun, rng);
  rng = next_rng();
  m.dcb.dynamic = DynamicConv<T>::create(base, base, k, config.dyn_kernels, rng);
  m.dcb.dynamic.temperature = static_cast<T>(config.temperature);
  rng = next_rng();
  m.dcb.refine = Conv2d<T>::create(base, base, k, Init::kaiming, rng);
  for (auto& block : m.web) {
    rng = next_rng();
    block.enhance = ResidualDenseBlock<T>::create(4 * base, g, k, rng);
  }
  rng = next_rng();
  m.rb.rdb1 = ResidualDenseBlock<T>::create(base, g, k, rng);
  rng = next_rng();
  m.rb.rdb2 = ResidualDenseBlock<T>::create(base, g, k, rng);
  rng = next_rng();
  m.rb.refine = Conv2d<T>::create(base, base, k, Init::kaiming, rng);
  rng = next_rng();
  // Zero so the untrained network is the identity denoiser.
  m.rb.reconstruct = Conv2d<T>::create(base, in, k, Init::zeros, rng);
  return m;
}

template <typename T>
Tensor<T> Mwdcnn<T>::dcb_forward(const Tensor<T>& noisy) const {
  if (noisy.rank() != 4 || noisy.dim(1) != config_.in_channels) {
    throw ShapeError("dynamic convolution block: expected N x " +
                     std::to_string(config_.in_channels) + " x H x W input, got " +
                     shape_string(noisy.shape()));
  }
  auto first = dcb.conv_in.forward(noisy);
  auto dynamic = dcb.dynamic.forward(first);
  if (config_.additive_fusion) dynamic = add(dynamic, first);
  return relu(dcb.refine.forward(relu(dynamic)));
}

template <typename T>
Tensor<T> Mwdcnn<T>::web_forward(int stage, const Tensor<T>& x) const {
  if (stage != 1 && stage != 2) {
    throw std::invalid_argument("wavelet block stage must be 1 or 2, got " +
                                std::to_string(stage));
  }
  const auto& block = web[static_cast<std::size_t>(stage - 1)];
  return idwt2d(block.enhance.forward(dwt2d(x)));
}

template <typename T>
Tensor<T> Mwdcnn<T>::rb_forward(const Tensor<T>& web_out, const Tensor<T>& noisy) const {
  auto s1 = relu(rb.rdb1.forward(web_out));
  auto s2 = relu(rb.rdb2.forward(s1));
  auto fused = add(add(web_out, s1), s2);
  auto refined = relu(rb.refine.forward(fused));
  auto noise_map = rb.reconstruct.forward(refined);
  if (noise_map.shape() != noisy.shape()) {
    throw ShapeError("residual block: noise map " + shape_string(noise_map.shape()) +
                     " does not match noisy input " + shape_string(noisy.shape()));
  }
  return sub(noisy, noise_map);
}

template <typename T>
Tensor<T> Mwdcnn<T>::forward(const Tensor<T>& noisy) const {
  if (noisy.rank() != 4) {
    throw ShapeError("model input must be N x C x H x W, got " + shape_string(noisy.shape()));
  }
  const std::size_t h = noisy.dim(2), w = noisy.dim(3);
  if (h < 8 || w < 8 || h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("model input height and width must be even and at least 8, got " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  auto features = dcb_forward(noisy);
  features = web_forward(1, features);
  features = web_forward(2, features);
  return rb_forward(features, noisy);
}

template <typename T>
NamedParameters<T> Mwdcnn<T>::parameters() const {
  NamedParameters<T> out;
  dcb.conv_in.collect("dcb.conv_in", out);
  dcb.dynamic.collect("dcb.dynamic", out);
  dcb.refine.collect("dcb.refine", out);
  web[0].enhance.collect("web1.enhance", out);
  web[1].enhance.collect("web2.enhance", out);
  rb.rdb1.collect("rb.rdb1", out);
  rb.rdb2.collect("rb.rdb2", out);
  rb.refine.collect("rb.refine", out);
  rb.reconstruct.collect("rb.reconstruct", out);
  return out;
}

template <typename T>
std::size_t Mwdcnn<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : parameters()) total += t.numel();
  return total;
}

template <typename T>
Mwdcnn<T> Mwdcnn<T>::clone() const {
  Mwdcnn copy = create(config_);
  auto dst = copy.parameters();
  const auto src = parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto values = src[i].second.data();
    std::copy(values.begin(), values.end(), dst[i].second.mutable_data().begin());
  }
  return copy;
}

template class Mwdcnn<float>;
template class Mwdcnn<double>;

}  // namespace mwdcnn
