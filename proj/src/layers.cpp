#include "mwdcnn/layers.hpp"

#include <cmath>

#include "mwdcnn/ops.hpp"

namespace mwdcnn {
namespace {

template <typename T>
void require_channels(const Tensor<T>& x, std::size_t expected, const char* block) {
  if (x.rank() != 4 || x.dim(1) != expected) {
    throw ShapeError(std::string(block) + ": expected N x " + std::to_string(expected) +
                     " x H x W input, got " + shape_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> init_weight(Shape shape, std::size_t fan_in, Init init, CounterRng& rng) {
  std::vector<T> values(numel(shape), T(0));
  if (init != Init::zeros) {
    const double gain = init == Init::kaiming ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / double(fan_in));
    for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
  }
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

template <typename T>
Conv2d<T> Conv2d<T>::create(std::size_t in, std::size_t out, std::size_t kernel, Init init,
                            CounterRng& rng) {
  Conv2d c;
  c.weight = init_weight<T>(Shape{out, in, kernel, kernel}, in * kernel * kernel, init, rng);
  c.bias = Tensor<T>::zeros(Shape{out}, true);
  return c;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d_same(x, weight, bias);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, NamedParameters<T>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
WeightGenerator<T> WeightGenerator<T>::create(std::size_t in, std::size_t kernels,
                                              CounterRng& rng) {
  WeightGenerator wg;
  wg.squeeze = Conv2d<T>::create(in, kernels, 1, Init::kaiming, rng);
  wg.expand = Conv2d<T>::create(kernels, kernels, 1, Init::lecun, rng);
  return wg;
}

template <typename T>
Tensor<T> WeightGenerator<T>::logits(const Tensor<T>& x) const {
  require_channels(x, squeeze.in_channels(), "weight generator");
  const std::size_t n = x.dim(0);
  auto pooled = reshape(global_avg_pool(x), Shape{n, x.dim(1), 1, 1});
  auto hidden = relu(squeeze.forward(pooled));
  return reshape(expand.forward(hidden), Shape{n, kernels()});
}

template <typename T>
Tensor<T> WeightGenerator<T>::forward(const Tensor<T>& x, T temperature) const {
  if (!(temperature > T(0))) {
    throw std::invalid_argument("weight generator: temperature must be positive");
  }
  auto scores = logits(x);
  if (temperature != T(1)) scores = scale(scores, T(1) / temperature);
  return softmax(scores);
}

template <typename T>
void WeightGenerator<T>::collect(const std::string& prefix, NamedParameters<T>& out) const {
  squeeze.collect(prefix + ".squeeze", out);
  expand.collect(prefix + ".expand", out);
}

template <typename T>
DynamicConv<T> DynamicConv<T>::create(std::size_t in, std::size_t out, std::size_t kernel,
                                      std::size_t parallel, CounterRng& rng) {
  DynamicConv dc;
  dc.kernels = init_weight<T>(Shape{parallel, out, in, kernel, kernel}, in * kernel * kernel,
                              Init::kaiming, rng);
  dc.biases = Tensor<T>::zeros(Shape{parallel, out}, true);
  dc.generator = WeightGenerator<T>::create(in, parallel, rng);
  return dc;
}

template <typename T>
Tensor<T> DynamicConv<T>::apply(const Tensor<T>& x, const Tensor<T>& attention) const {
  require_channels(x, in_channels(), "dynamic convolution");
  const std::size_t k = parallel_kernels();
  const std::size_t n = x.dim(0);
  if (generator.kernels() != k) {
    throw ShapeError("dynamic convolution: weight generator yields " +
                     std::to_string(generator.kernels()) + " weights for " + std::to_string(k) +
                     " parallel kernels");
  }
  if (attention.rank() != 2 || attention.dim(0) != n || attention.dim(1) != k) {
    throw ShapeError("dynamic convolution: attention must be " + std::to_string(n) + " x " +
                     std::to_string(k) + ", got " + shape_string(attention.shape()));
  }
  const auto& ks = kernels.shape();
  auto bank = reshape(kernels, Shape{k, kernels.numel() / k});
  auto mixed = reshape(matmul(attention, bank), Shape{n, ks[1], ks[2], ks[3], ks[4]});
  auto mixed_bias = matmul(attention, biases);
  return conv2d_per_sample(x, mixed, mixed_bias);
}

template <typename T>
void DynamicConv<T>::collect(const std::string& prefix, NamedParameters<T>& out) const {
  out.emplace_back(prefix + ".kernels", kernels);
  out.emplace_back(prefix + ".biases", biases);
  generator.collect(prefix + ".generator", out);
}

template <typename T>
ResidualDenseBlock<T> ResidualDenseBlock<T>::create(std::size_t channels, std::size_t growth,
                                                    std::size_t kernel, CounterRng& rng) {
  ResidualDenseBlock b;
  b.conv1 = Conv2d<T>::create(channels, growth, kernel, Init::kaiming, rng);
  b.conv2 = Conv2d<T>::create(channels + growth, growth, kernel, Init::kaiming, rng);
  b.conv3 = Conv2d<T>::create(channels + 2 * growth, growth, kernel, Init::kaiming, rng);
  b.fuse = Conv2d<T>::create(channels + 3 * growth, channels, 1, Init::lecun, rng);
  return b;
}

template <typename T>
Tensor<T> ResidualDenseBlock<T>::forward(const Tensor<T>& x) const {
  require_channels(x, channels(), "residual dense block");
  auto x1 = relu(conv1.forward(x));
  auto x2 = relu(conv2.forward(concat_channels<T>({x, x1})));
  auto x3 = relu(conv3.forward(concat_channels<T>({x, x1, x2})));
  return add(x, fuse.forward(concat_channels<T>({x, x1, x2, x3})));
}

template <typename T>
void ResidualDenseBlock<T>::collect(const std::string& prefix, NamedParameters<T>& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  conv3.collect(prefix + ".conv3", out);
  fuse.collect(prefix + ".fuse", out);
}

template <typename T>
void zero_parameters(const NamedParameters<T>& params) {
  for (auto [name, tensor] : params) {
    for (auto& v : tensor.mutable_data()) v = T(0);
  }
}

template Tensor<float> init_weight(Shape, std::size_t, Init, CounterRng&);
template Tensor<double> init_weight(Shape, std::size_t, Init, CounterRng&);
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct WeightGenerator<float>;
template struct WeightGenerator<double>;
template struct DynamicConv<float>;
template struct DynamicConv<double>;
template struct ResidualDenseBlock<float>;
template struct ResidualDenseBlock<double>;
template void zero_parameters(const NamedParameters<float>&);
template void zero_parameters(const NamedParameters<double>&);

}  // namespace mwdcnn
