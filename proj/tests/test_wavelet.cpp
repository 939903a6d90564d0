#include <cmath>

#include "doctest.h"
#include "mwdcnn/ops.hpp"
#include "mwdcnn/wavelet.hpp"
#include "support.hpp"

using namespace mwdcnn;

namespace {

template <typename T>
double energy(std::span<const T> v) {
  double e = 0.0;
  for (T x : v) e += double(x) * double(x);
  return e;
}

template <typename T>
double inner(std::span<const T> a, std::span<const T> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

}  // namespace

TEST_CASE("constant image maps to LL = 2v and zero details") {
  const double v = 0.7;
  const auto y = dwt2d(Tensor<double>::full({1, 2, 4, 6}, v));
  REQUIRE(y.shape() == Shape{1, 8, 2, 3});
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t p = 0; p < 6; ++p) {
      const double expect = c < 2 ? 2.0 * v : 0.0;
      CHECK(std::abs(y.data()[c * 6 + p] - expect) < 1e-15);
    }
  }
  const auto back = idwt2d(y);
  for (double s : back.data()) CHECK(std::abs(s - v) < 1e-15);
}

TEST_CASE("single block closed form in both directions") {
  const auto y = dwt2d(Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(y.data()[subband_channel(Subband::LL, 0, 1)] == 5.0);
  CHECK(y.data()[subband_channel(Subband::LH, 0, 1)] == 2.0);
  CHECK(y.data()[subband_channel(Subband::HL, 0, 1)] == 1.0);
  CHECK(y.data()[subband_channel(Subband::HH, 0, 1)] == 0.0);
  const auto x = idwt2d(Tensor<double>::from({1, 4, 1, 1}, {5, 2, 1, 0}));
  CHECK(std::vector<double>(x.data().begin(), x.data().end()) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("subband blocks are grouped by band then channel") {
  // Channel 1 of a two-channel input holds the only non-zero block.
  auto x = Tensor<double>::zeros({1, 2, 2, 2});
  const std::vector<double> block{1, 2, 3, 4};
  std::copy(block.begin(), block.end(), x.mutable_data().begin() + 4);
  const auto y = dwt2d(x);
  CHECK(y.data()[subband_channel(Subband::LL, 1, 2)] == 5.0);
  CHECK(y.data()[subband_channel(Subband::LH, 1, 2)] == 2.0);
  CHECK(y.data()[subband_channel(Subband::HL, 1, 2)] == 1.0);
  CHECK(y.data()[subband_channel(Subband::LL, 0, 2)] == 0.0);
}

TEST_CASE("odd sizes and bad channel counts are rejected") {
  CHECK_THROWS_AS(dwt2d(Tensor<float>::zeros({1, 1, 5, 4})), ShapeError);
  CHECK_THROWS_AS(dwt2d(Tensor<float>::zeros({1, 1, 4, 3})), ShapeError);
  CHECK_THROWS_AS(idwt2d(Tensor<float>::zeros({1, 6, 2, 2})), ShapeError);
  try {
    dwt2d(Tensor<float>::zeros({1, 1, 5, 4}));
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("pad") != std::string::npos);
  }
}

TEST_CASE("perfect reconstruction in both directions and both precisions") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto xf = testing::random_tensor<float>({2, 3, 8, 10}, seed);
    CHECK(testing::max_abs_diff(idwt2d(dwt2d(xf)).data(), xf.data()) < 1e-5);
    auto yf = testing::random_tensor<float>({2, 12, 4, 5}, seed + 50);
    CHECK(testing::max_abs_diff(dwt2d(idwt2d(yf)).data(), yf.data()) < 1e-5);

    auto xd = testing::random_tensor<double>({2, 3, 8, 10}, seed);
    CHECK(testing::max_abs_diff(idwt2d(dwt2d(xd)).data(), xd.data()) < 1e-12);
    auto yd = testing::random_tensor<double>({2, 12, 4, 5}, seed + 50);
    CHECK(testing::max_abs_diff(dwt2d(idwt2d(yd)).data(), yd.data()) < 1e-12);
  }
}

TEST_CASE("random 2x64x24x24 preserves energy and round-trips") {
  auto x = testing::random_tensor<float>({2, 64, 24, 24}, 77);
  const auto y = dwt2d(x);
  CHECK(y.shape() == Shape{2, 256, 12, 12});
  const double ex = energy(x.data()), ey = energy(y.data());
  CHECK(std::abs(ex - ey) / ex < 1e-5);
  CHECK(testing::max_abs_diff(idwt2d(y).data(), x.data()) < 1e-5);
}

TEST_CASE("inner products are preserved") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = testing::random_tensor<double>({1, 2, 6, 6}, seed);
    auto y = testing::random_tensor<double>({1, 2, 6, 6}, seed + 1000);
    CHECK(std::abs(inner(dwt2d(x).data(), dwt2d(y).data()) - inner(x.data(), y.data())) < 1e-4);
  }
}

TEST_CASE("the transform is linear") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = testing::random_tensor<double>({2, 1, 4, 4}, seed);
    auto y = testing::random_tensor<double>({2, 1, 4, 4}, seed + 1);
    const double a = 1.5, b = -0.25;
    const auto lhs = dwt2d(add(scale(x, a), scale(y, b)));
    const auto rhs = add(scale(dwt2d(x), a), scale(dwt2d(y), b));
    CHECK(testing::max_abs_diff(lhs.data(), rhs.data()) < 1e-12);
  }
}

TEST_CASE("gradient of dwt2d is idwt2d of the upstream gradient") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = testing::random_tensor<double>({1, 2, 4, 6}, seed, true);
    const auto y = dwt2d(x);
    auto upstream = testing::random_tensor<double>(y.shape(), seed + 9);
    backward(sum(mul(y, upstream)));
    CHECK(testing::max_abs_diff(x.grad(), idwt2d(upstream).data()) < 1e-14);

    auto s = testing::random_tensor<double>({1, 8, 2, 3}, seed + 3, true);
    const auto r = idwt2d(s);
    auto up2 = testing::random_tensor<double>(r.shape(), seed + 4);
    backward(sum(mul(r, up2)));
    CHECK(testing::max_abs_diff(s.grad(), dwt2d(up2).data()) < 1e-14);
  }
}
