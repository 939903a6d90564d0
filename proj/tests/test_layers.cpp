#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mwdcnn/gradcheck.hpp"
#include "mwdcnn/layers.hpp"
#include "mwdcnn/ops.hpp"
#include "support.hpp"

using namespace mwdcnn;

namespace {

using Vec = std::vector<double>;

template <typename T>
void randomize(const NamedParameters<T>& params, std::uint64_t seed, double lo = -0.5, double hi = 0.5) {
  for (auto [name, p] : params) {
    const auto values = testing::random_values<T>(p.numel(), seed++, lo, hi);
    std::copy(values.begin(), values.end(), p.mutable_data().begin());
  }
}

NamedParameters<double> collect(const auto& layer) {
  NamedParameters<double> out;
  layer.collect("layer", out);
  return out;
}

Vec relu_vec(Vec v) {
  for (auto& x : v) x = std::max(0.0, x);
  return v;
}

// Concatenates per-sample channel blocks of equal spatial size.
Vec concat_vec(const std::vector<std::pair<const Vec*, std::size_t>>& parts, std::size_t n, std::size_t area) {
  Vec out;
  for (std::size_t s = 0; s < n; ++s) {
    for (const auto& [v, c] : parts) {
      out.insert(out.end(), v->begin() + std::ptrdiff_t(s * c * area), v->begin() + std::ptrdiff_t((s + 1) * c * area));
    }
  }
  return out;
}

Vec conv_vec(const Vec& x, const Conv2d<double>& conv, std::size_t n, std::size_t h, std::size_t w) {
  const std::size_t k = conv.kernel_size();
  return testing::naive_conv<double>(x, conv.weight.data(), conv.bias.data(), n, conv.in_channels(), h, w,
                                     conv.out_channels(), k, (k - 1) / 2);
}

// Pool -> conv -> relu -> conv -> softmax, written out per sample.
Vec wg_oracle(const WeightGenerator<double>& wg, const Tensor<double>& x, double temperature) {
  const std::size_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3), k = wg.kernels();
  Vec out(n * k);
  for (std::size_t s = 0; s < n; ++s) {
    Vec pooled(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < area; ++p) pooled[ch] += x.data()[(s * c + ch) * area + p];
      pooled[ch] /= double(area);
    }
    Vec hidden(k), logits(k);
    for (std::size_t o = 0; o < k; ++o) {
      double acc = wg.squeeze.bias.data()[o];
      for (std::size_t ch = 0; ch < c; ++ch) acc += wg.squeeze.weight.data()[o * c + ch] * pooled[ch];
      hidden[o] = std::max(0.0, acc);
    }
    for (std::size_t o = 0; o < k; ++o) {
      double acc = wg.expand.bias.data()[o];
      for (std::size_t i = 0; i < k; ++i) acc += wg.expand.weight.data()[o * k + i] * hidden[i];
      logits[o] = acc / temperature;
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& l : logits) total += (l = std::exp(l - peak));
    for (std::size_t o = 0; o < k; ++o) out[s * k + o] = logits[o] / total;
  }
  return out;
}

// Materializes each sample's aggregated kernel and runs the naive conv.
Vec dynamic_oracle(const DynamicConv<double>& dc, const Tensor<double>& x, const Vec& attention) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t K = dc.parallel_kernels(), o = dc.out_channels(), k = dc.kernels.dim(3);
  const std::size_t wsize = o * c * k * k, in = c * h * w;
  Vec out;
  for (std::size_t s = 0; s < n; ++s) {
    Vec weight(wsize, 0.0), bias(o, 0.0);
    for (std::size_t i = 0; i < K; ++i) {
      const double a = attention[s * K + i];
      for (std::size_t j = 0; j < wsize; ++j) weight[j] += a * dc.kernels.data()[i * wsize + j];
      for (std::size_t j = 0; j < o; ++j) bias[j] += a * dc.biases.data()[i * o + j];
    }
    const auto y = testing::naive_conv<double>(x.data().subspan(s * in, in), weight, bias, 1, c, h, w, o, k, (k - 1) / 2);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

Vec rdb_oracle(const ResidualDenseBlock<double>& rdb, const Tensor<double>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), area = h * w;
  const std::size_t g = rdb.conv1.out_channels();
  const Vec x0(x.data().begin(), x.data().end());
  const Vec x1 = relu_vec(conv_vec(x0, rdb.conv1, n, h, w));
  const Vec c01 = concat_vec({{&x0, c}, {&x1, g}}, n, area);
  const Vec x2 = relu_vec(conv_vec(c01, rdb.conv2, n, h, w));
  const Vec c012 = concat_vec({{&x0, c}, {&x1, g}, {&x2, g}}, n, area);
  const Vec x3 = relu_vec(conv_vec(c012, rdb.conv3, n, h, w));
  const Vec all = concat_vec({{&x0, c}, {&x1, g}, {&x2, g}, {&x3, g}}, n, area);
  Vec out = conv_vec(all, rdb.fuse, n, h, w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x0[i];
  return out;
}

}  // namespace

TEST_CASE("weight generator: zero input and zero biases give uniform attention") {
  CounterRng rng(1);
  auto wg = WeightGenerator<double>::create(64, 4, rng);
  const auto a = wg.forward(Tensor<double>::zeros({2, 64, 6, 6}));
  REQUIRE(a.shape() == Shape{2, 4});
  for (double v : a.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("weight generator output lies on the simplex for 1000 random inputs") {
  CounterRng rng(2);
  auto wg = WeightGenerator<float>::create(8, 4, rng);
  NamedParameters<float> params;
  wg.collect("wg", params);
  randomize(params, 3, -2.0, 2.0);
  const auto x = testing::random_tensor<float>({1000, 8, 2, 2}, 4, false, -5.0, 5.0);
  const auto a = wg.forward(x);
  for (std::size_t s = 0; s < 1000; ++s) {
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const float v = a.data()[s * 4 + i];
      CHECK(v >= 0.f);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("weight generator matches the step-by-step oracle") {
  CounterRng rng(5);
  auto wg = WeightGenerator<double>::create(64, 4, rng);
  randomize(collect(wg), 6);
  const auto x = testing::random_tensor<double>({3, 64, 5, 5}, 7);
  for (double t : {1.0, 0.5, 3.0}) {
    const auto a = wg.forward(x, t);
    CHECK(a.shape() == Shape{3, 4});
    CHECK(testing::max_abs_diff(a.data(), std::span<const double>(wg_oracle(wg, x, t))) < 1e-12);
  }
}

TEST_CASE("dominant kernel does not depend on the temperature") {
  CounterRng rng(8);
  auto wg = WeightGenerator<double>::create(6, 4, rng);
  randomize(collect(wg), 9, -1.0, 1.0);
  const auto x = testing::random_tensor<double>({50, 6, 3, 3}, 10, false, -3.0, 3.0);
  auto argmax_rows = [](const Tensor<double>& a) {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < a.dim(0); ++s) {
      const auto row = a.data().subspan(s * 4, 4);
      out.push_back(std::size_t(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    return out;
  };
  const auto base = argmax_rows(wg.forward(x, 1.0));
  for (double t : {0.1, 0.5, 2.0, 10.0}) CHECK(argmax_rows(wg.forward(x, t)) == base);
}

TEST_CASE("dynamic convolution equals the per-sample aggregated-kernel oracle") {
  CounterRng rng(11);
  auto dc = DynamicConv<double>::create(5, 6, 5, 4, rng);
  randomize(collect(dc), 12);
  const auto x = testing::random_tensor<double>({3, 5, 7, 8}, 13);
  const auto y = dc.forward(x);
  REQUIRE(y.shape() == Shape{3, 6, 7, 8});
  const auto att = dc.attention(x);
  const Vec a(att.data().begin(), att.data().end());
  CHECK(testing::max_abs_diff(y.data(), std::span<const double>(dynamic_oracle(dc, x, a))) < 1e-5);
  CHECK(testing::max_abs_diff(y.data(), std::span<const double>(dynamic_oracle(dc, x, a))) < 1e-12);
}

TEST_CASE("one-hot attention degenerates to the selected plain convolution") {
  CounterRng rng(14);
  auto dc = DynamicConv<float>::create(4, 4, 5, 4, rng);
  NamedParameters<float> params;
  dc.collect("dc", params);
  randomize(params, 15);
  const auto x = testing::random_tensor<float>({2, 4, 6, 6}, 16);
  const std::size_t wsize = 4 * 4 * 25;
  for (std::size_t j = 0; j < 4; ++j) {
    // Saturate the generator: zero expand weights, a huge bias on kernel j.
    zero_parameters<float>({{"w", dc.generator.expand.weight}, {"b", dc.generator.expand.bias}});
    dc.generator.expand.bias.mutable_data()[j] = 1000.f;
    const auto att = dc.attention(x);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t i = 0; i < 4; ++i) CHECK(att.data()[s * 4 + i] == (i == j ? 1.f : 0.f));

    const auto y = dc.forward(x);
    auto kernel = Tensor<float>::from({4, 4, 5, 5}, {dc.kernels.data().begin() + std::ptrdiff_t(j * wsize),
                                                     dc.kernels.data().begin() + std::ptrdiff_t((j + 1) * wsize)});
    auto bias = Tensor<float>::from({4}, {dc.biases.data().begin() + std::ptrdiff_t(j * 4),
                                          dc.biases.data().begin() + std::ptrdiff_t(j * 4 + 4)});
    CHECK(testing::max_abs_diff(y.data(), conv2d_same(x, kernel, bias).data()) < 1e-5);
  }
}

TEST_CASE("uniform attention equals convolution with the mean kernel") {
  CounterRng rng(17);
  auto dc = DynamicConv<double>::create(3, 2, 3, 4, rng);
  randomize(collect(dc), 18);
  const auto x = testing::random_tensor<double>({2, 3, 5, 5}, 19);
  const auto y = dc.apply(x, Tensor<double>::full({2, 4}, 0.25));
  const std::size_t wsize = 2 * 3 * 9;
  std::vector<double> mean_w(wsize, 0.0), mean_b(2, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < wsize; ++j) mean_w[j] += dc.kernels.data()[i * wsize + j] / 4.0;
    for (std::size_t j = 0; j < 2; ++j) mean_b[j] += dc.biases.data()[i * 2 + j] / 4.0;
  }
  const auto ref = conv2d_same(x, Tensor<double>::from({2, 3, 3, 3}, mean_w), Tensor<double>::from({2}, mean_b));
  CHECK(testing::max_abs_diff(y.data(), ref.data()) < 1e-12);
}

TEST_CASE("dynamic convolution is permutation-equivariant over the batch") {
  CounterRng rng(20);
  auto dc = DynamicConv<double>::create(3, 3, 5, 4, rng);
  randomize(collect(dc), 21);
  const auto x = testing::random_tensor<double>({3, 3, 6, 6}, 22);
  const std::size_t in = 3 * 36;
  const std::size_t perm[3] = {2, 0, 1};
  std::vector<double> permuted;
  for (std::size_t s : perm) permuted.insert(permuted.end(), x.data().begin() + std::ptrdiff_t(s * in), x.data().begin() + std::ptrdiff_t((s + 1) * in));
  const auto y = dc.forward(x);
  const auto yp = dc.forward(Tensor<double>::from(x.shape(), permuted));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(testing::max_abs_diff(yp.data().subspan(i * in, in), y.data().subspan(perm[i] * in, in)) == 0.0);
  }
}

TEST_CASE("dynamic convolution rejects mismatched attention and channels") {
  CounterRng rng(23);
  auto dc = DynamicConv<double>::create(3, 3, 3, 4, rng);
  const auto x = Tensor<double>::zeros({2, 3, 4, 4});
  CHECK_THROWS_AS(dc.apply(x, Tensor<double>::full({2, 3}, 1.0 / 3)), ShapeError);
  CHECK_THROWS_AS(dc.forward(Tensor<double>::zeros({2, 5, 4, 4})), ShapeError);
  auto wg = WeightGenerator<double>::create(3, 4, rng);
  CHECK_THROWS_AS(wg.forward(Tensor<double>::zeros({1, 2, 4, 4})), ShapeError);
}

TEST_CASE("residual dense block: zero parameters give the identity") {
  CounterRng rng(24);
  auto rdb = ResidualDenseBlock<float>::create(64, 64, 5, rng);
  NamedParameters<float> params;
  rdb.collect("rdb", params);
  zero_parameters(params);
  const auto x = testing::random_tensor<float>({2, 64, 24, 24}, 25);
  const auto y = rdb.forward(x);
  REQUIRE(y.shape() == x.shape());
  CHECK(testing::max_abs_diff(y.data(), x.data()) == 0.0);
}

TEST_CASE("residual dense block matches the unrolled oracle") {
  CounterRng rng(26);
  auto rdb = ResidualDenseBlock<double>::create(6, 4, 5, rng);
  randomize(collect(rdb), 27, -0.3, 0.3);
  const auto x = testing::random_tensor<double>({2, 6, 7, 6}, 28);
  const auto y = rdb.forward(x);
  CHECK(y.shape() == x.shape());
  CHECK(testing::max_abs_diff(y.data(), std::span<const double>(rdb_oracle(rdb, x))) < 1e-5);
  CHECK(testing::max_abs_diff(y.data(), std::span<const double>(rdb_oracle(rdb, x))) < 1e-12);
  CHECK_THROWS_AS(rdb.forward(Tensor<double>::zeros({1, 5, 4, 4})), ShapeError);
}

TEST_CASE("residual dense block Jacobian at zero parameters is the identity") {
  CounterRng rng(29);
  auto rdb = ResidualDenseBlock<double>::create(2, 2, 3, rng);
  zero_parameters(collect(rdb));
  auto x = testing::random_tensor<double>({1, 2, 3, 3}, 30);
  const std::size_t n = x.numel();
  const double h = 1e-4;
  for (std::size_t j = 0; j < n; ++j) {
    const double original = x.data()[j];
    x.mutable_data()[j] = original + h;
    const auto plus = rdb.forward(x);
    x.mutable_data()[j] = original - h;
    const auto minus_t = rdb.forward(x);
    x.mutable_data()[j] = original;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (plus.data()[i] - minus_t.data()[i]) / (2 * h);
      CHECK(std::abs(d - (i == j ? 1.0 : 0.0)) < 1e-9);
    }
  }
}

TEST_CASE("composite block gradients pass finite-difference checks") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CounterRng rng(derive_key(seed, {31}));
    auto x = testing::random_tensor<double>({2, 4, 6, 6}, seed + 40, true);
    auto probe_for = [&](const Tensor<double>& y) {
      return Tensor<double>::from(y.shape(), testing::probe_weights<double>(y.numel(), seed));
    };
    auto with_input = [&](NamedParameters<double> p) {
      std::vector<NamedTensor> out(p.begin(), p.end());
      out.emplace_back("input", x);
      return out;
    };

    auto wg = WeightGenerator<double>::create(4, 4, rng);
    auto r1 = grad_check([&] { auto y = wg.forward(x); return sum(mul(y, probe_for(y))); }, with_input(collect(wg)));
    INFO("wg " << r1.max_rel_error());
    CHECK(r1.passed());

    auto dc = DynamicConv<double>::create(4, 3, 3, 4, rng);
    auto r2 = grad_check([&] { auto y = dc.forward(x); return sum(mul(y, probe_for(y))); }, with_input(collect(dc)));
    INFO("dynamic " << r2.max_rel_error());
    CHECK(r2.passed());

    auto rdb = ResidualDenseBlock<double>::create(4, 3, 3, rng);
    randomize(collect(rdb), seed + 50, -0.1, 0.1);
    auto r3 = grad_check([&] { auto y = rdb.forward(x); return sum(mul(y, probe_for(y))); }, with_input(collect(rdb)));
    INFO("rdb " << r3.max_rel_error());
    CHECK(r3.passed());
  }
}

TEST_CASE("initialization follows the requested fan-in scaling") {
  CounterRng rng(60);
  const auto w = init_weight<double>({64, 64, 5, 5}, 64 * 25, Init::kaiming, rng);
  double ss = 0.0;
  for (double v : w.data()) ss += v * v;
  CHECK(std::abs(ss / double(w.numel()) - 2.0 / 1600.0) < 0.05 * 2.0 / 1600.0);
  const auto l = init_weight<double>({64, 64, 5, 5}, 64 * 25, Init::lecun, rng);
  ss = 0.0;
  for (double v : l.data()) ss += v * v;
  CHECK(std::abs(ss / double(l.numel()) - 1.0 / 1600.0) < 0.05 * 1.0 / 1600.0);
  const auto z = init_weight<double>({3}, 1, Init::zeros, rng);
  CHECK(std::all_of(z.data().begin(), z.data().end(), [](double v) { return v == 0.0; }));
}
