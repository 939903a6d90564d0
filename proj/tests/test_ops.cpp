#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mwdcnn/ops.hpp"
#include "support.hpp"

using namespace mwdcnn;

TEST_CASE("conv2d with a 1x1 identity kernel") {
  auto x = Tensor<float>::from({1, 1, 1, 1}, {5});
  auto w = Tensor<float>::from({1, 1, 1, 1}, {1});
  auto b = Tensor<float>::from({1}, {0});
  CHECK(conv2d(x, w, b, 0).data()[0] == 5.f);
}

TEST_CASE("conv2d of ones with a 3x3 ones kernel counts overlap") {
  auto x = Tensor<float>::full({1, 1, 3, 3}, 1.f);
  auto w = Tensor<float>::full({1, 1, 3, 3}, 1.f);
  auto b = Tensor<float>::from({1}, {0});
  for (auto algo : {ConvAlgorithm::direct, ConvAlgorithm::gemm}) {
    set_conv_algorithm(algo);
    const auto out = conv2d(x, w, b, 1);
    const auto y = out.data();
    CHECK(y[4] == 9.f);
    CHECK(y[0] == 4.f);
    CHECK(y[2] == 4.f);
    CHECK(y[6] == 4.f);
    CHECK(y[8] == 4.f);
    CHECK(y[1] == 6.f);
  }
  set_conv_algorithm(ConvAlgorithm::gemm);
}

TEST_CASE("conv2d rejects channel mismatch and even same-padding kernels") {
  auto x = Tensor<float>::zeros({1, 2, 4, 4});
  auto w = Tensor<float>::zeros({3, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w, Tensor<float>(), 1), ShapeError);
  auto w_even = Tensor<float>::zeros({3, 2, 2, 2});
  CHECK_THROWS_AS(conv2d_same(x, w_even, Tensor<float>()), ShapeError);
  auto w_ok = Tensor<float>::zeros({3, 2, 3, 3});
  CHECK_THROWS_AS(conv2d_same(x, w_ok, Tensor<float>::zeros({2})), ShapeError);
}

TEST_CASE("conv2d_per_sample uses each sample's own kernel") {
  auto x = testing::random_tensor<double>({3, 2, 6, 5}, 1);
  auto w = testing::random_tensor<double>({3, 4, 2, 3, 3}, 2);
  auto b = testing::random_tensor<double>({3, 4}, 3);
  const auto y = conv2d_per_sample(x, w, b);
  REQUIRE(y.shape() == Shape{3, 4, 6, 5});
  const std::size_t in = 2 * 6 * 5, out = 4 * 6 * 5, wsize = 4 * 2 * 9;
  for (std::size_t n = 0; n < 3; ++n) {
    const auto expect = testing::naive_conv<double>(x.data().subspan(n * in, in),
                                                    w.data().subspan(n * wsize, wsize),
                                                    b.data().subspan(n * 4, 4), 1, 2, 6, 5, 4, 3, 1);
    CHECK(testing::max_abs_diff(y.data().subspan(n * out, out), std::span<const double>(expect)) < 1e-12);
  }
}

TEST_CASE("relu forward and subgradient at zero") {
  auto x = Tensor<double>::from({3}, {-1, 0, 2}, true);
  auto y = relu(x);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{0, 0, 2});
  backward(sum(y));
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
  auto x3 = Tensor<double>::scalar(3.0, true);
  backward(sum(relu(x3)));
  CHECK(x3.grad()[0] == 1.0);
}

TEST_CASE("softmax closed forms and shift invariance") {
  auto u = softmax(Tensor<double>::zeros({1, 4}));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  auto t = softmax(Tensor<double>::from({1, 2}, {0.0, std::log(3.0)}));
  CHECK(t.data()[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(t.data()[1] == doctest::Approx(0.75).epsilon(1e-14));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = testing::random_tensor<float>({3, 5}, seed, false, -4.0, 4.0);
    std::vector<float> shifted(x.data().begin(), x.data().end());
    for (auto& v : shifted) v += 7.25f;
    const auto a = softmax(x), b = softmax(Tensor<float>::from({3, 5}, shifted));
    CHECK(testing::max_abs_diff(a.data(), b.data()) < 1e-6);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 5; ++c) total += a.data()[r * 5 + c];
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
  // Large logits must not overflow.
  auto big = softmax(Tensor<double>::from({1, 2}, {1000.0, 0.0}));
  CHECK(big.data()[0] == 1.0);
  CHECK(std::isfinite(big.data()[1]));
}

TEST_CASE("global average pool") {
  auto c = global_avg_pool(Tensor<double>::full({2, 3, 4, 5}, 1.75));
  REQUIRE(c.shape() == Shape{2, 3});
  for (double v : c.data()) CHECK(v == 1.75);
  auto s = global_avg_pool(Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(s.data()[0] == 2.5);

  auto x = testing::random_tensor<float>({2, 64, 24, 24}, 5);
  const auto pooled = global_avg_pool(x);
  for (std::size_t i = 0; i < 2 * 64; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < 576; ++p) acc += x.data()[i * 576 + p];
    CHECK(std::abs(pooled.data()[i] - acc / 576.0) < 1e-6);
  }
}

TEST_CASE("add, sub, scale and mul") {
  auto a = testing::random_tensor<double>({2, 3}, 7);
  auto zero = Tensor<double>::zeros({2, 3});
  CHECK(testing::max_abs_diff(add(a, zero).data(), a.data()) == 0.0);
  CHECK(testing::max_abs_diff(sub(a, a).data(), zero.data()) == 0.0);
  CHECK(scale(a, 2.0).data()[3] == 2.0 * a.data()[3]);
  CHECK(mul(a, a).data()[1] == a.data()[1] * a.data()[1]);
  CHECK_THROWS_AS(add(a, Tensor<double>::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(sub(a, Tensor<double>::zeros({6})), ShapeError);
}

TEST_CASE("concat_channels orders channels and routes gradients") {
  auto a = testing::random_tensor<double>({2, 2, 3, 3}, 8, true);
  auto b = testing::random_tensor<double>({2, 3, 3, 3}, 9, true);
  auto c = concat_channels<double>({a, b});
  REQUIRE(c.shape() == Shape{2, 5, 3, 3});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t ch = 0; ch < 5; ++ch) {
      for (std::size_t p = 0; p < 9; ++p) {
        const double got = c.data()[(n * 5 + ch) * 9 + p];
        const double expect = ch < 2 ? a.data()[(n * 2 + ch) * 9 + p] : b.data()[(n * 3 + ch - 2) * 9 + p];
        CHECK(got == expect);
      }
    }
  }
  const auto probe = testing::probe_weights<double>(c.numel(), 10);
  backward(sum(mul(c, Tensor<double>::from(c.shape(), probe))));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t p = 0; p < 9; ++p) {
      CHECK(a.grad()[(n * 2 + 1) * 9 + p] == probe[(n * 5 + 1) * 9 + p]);
      CHECK(b.grad()[(n * 3 + 2) * 9 + p] == probe[(n * 5 + 4) * 9 + p]);
    }
  }
  CHECK_THROWS_AS(concat_channels<double>({a, Tensor<double>::zeros({2, 1, 4, 3})}), ShapeError);
}

TEST_CASE("reshape and matmul") {
  auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor<double>::from({3, 2}, {7, 8, 9, 10, 11, 12});
  const auto c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 2});
  CHECK(c.data()[0] == 58.0);
  CHECK(c.data()[1] == 64.0);
  CHECK(c.data()[2] == 139.0);
  CHECK(c.data()[3] == 154.0);
  CHECK(reshape(a, {3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}
