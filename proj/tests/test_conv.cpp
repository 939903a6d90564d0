#include <cmath>

#include "doctest.h"
#include "mwdcnn/ops.hpp"
#include "mwdcnn/kernels.hpp"
#include "support.hpp"

using namespace mwdcnn;

namespace {

struct AlgorithmGuard {
  ConvAlgorithm saved = conv_algorithm();
  ~AlgorithmGuard() { set_conv_algorithm(saved); }
};

struct Geometry {
  std::size_t n, c, h, w, o, k;
};

Geometry random_geometry(CounterRng& rng) {
  const std::size_t ks[] = {1, 3, 5};
  Geometry g;
  g.n = 1 + rng.below(3);
  g.c = 1 + rng.below(6);
  g.h = 5 + rng.below(12);
  g.w = 5 + rng.below(12);
  g.o = 1 + rng.below(7);
  g.k = ks[rng.below(3)];
  return g;
}

template <typename T>
double conv_vs_oracle(const Geometry& g, std::uint64_t seed) {
  auto x = testing::random_tensor<T>({g.n, g.c, g.h, g.w}, seed);
  auto w = testing::random_tensor<T>({g.o, g.c, g.k, g.k}, seed + 1);
  auto b = testing::random_tensor<T>({g.o}, seed + 2);
  const auto y = conv2d_same(x, w, b);
  const auto expect = testing::naive_conv_same(x, w, b);
  return testing::max_abs_diff(y.data(), std::span<const double>(expect));
}

}  // namespace

TEST_CASE("both conv algorithms match the nested-loop oracle on random shapes") {
  AlgorithmGuard guard;
  CounterRng rng(derive_key(42, {1}));
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = random_geometry(rng);
    for (auto algo : {ConvAlgorithm::direct, ConvAlgorithm::gemm}) {
      set_conv_algorithm(algo);
      INFO("trial " << trial << " k=" << g.k << " algo=" << int(algo));
      CHECK(conv_vs_oracle<float>(g, 100 + trial) < 1e-5);
      CHECK(conv_vs_oracle<double>(g, 100 + trial) < 1e-10);
    }
  }
}

TEST_CASE("random 2x3x8x8 input with 4x3x5x5 weights matches the oracle") {
  AlgorithmGuard guard;
  for (auto algo : {ConvAlgorithm::direct, ConvAlgorithm::gemm}) {
    set_conv_algorithm(algo);
    CHECK(conv_vs_oracle<float>({2, 3, 8, 8, 4, 5}, 7) < 1e-5);
  }
}

TEST_CASE("gemm path agrees with direct path in forward and backward under every ISA") {
  AlgorithmGuard guard;
  const auto original = kernels::active_isa();
  for (auto isa : kernels::available_isas()) {
    kernels::set_active_isa(isa);
    for (std::size_t k : {1u, 3u, 5u}) {
      auto run = [&](ConvAlgorithm algo) {
        set_conv_algorithm(algo);
        auto x = testing::random_tensor<double>({2, 5, 9, 11}, 11, true);
        auto w = testing::random_tensor<double>({6, 5, k, k}, 12, true);
        auto b = testing::random_tensor<double>({6}, 13, true);
        auto y = conv2d_same(x, w, b);
        const auto probe = testing::probe_weights<double>(y.numel(), 14);
        backward(sum(mul(y, Tensor<double>::from(y.shape(), probe))));
        return std::vector<std::vector<double>>{
            {y.data().begin(), y.data().end()},
            {x.grad().begin(), x.grad().end()},
            {w.grad().begin(), w.grad().end()},
            {b.grad().begin(), b.grad().end()}};
      };
      const auto direct = run(ConvAlgorithm::direct);
      const auto fast = run(ConvAlgorithm::gemm);
      for (std::size_t i = 0; i < direct.size(); ++i) {
        INFO("isa " << kernels::isa_name(isa) << " k=" << k << " tensor " << i);
        CHECK(testing::max_abs_diff(direct[i], fast[i]) < 1e-11);
      }
    }
  }
  kernels::set_active_isa(original);
}

TEST_CASE("large images exercise the chunked im2col path") {
  AlgorithmGuard guard;
  set_conv_algorithm(ConvAlgorithm::gemm);
  // 16 input channels x 25 taps x 96 x 96 pixels exceeds one column chunk.
  // Sums of 400 products reach ~20, past what float holds to 1e-5, so check in double.
  CHECK(conv_vs_oracle<double>({1, 16, 96, 96, 3, 5}, 21) < 1e-10);
}

TEST_CASE("convolution is linear in its input for zero bias") {
  CounterRng rng(derive_key(5, {2}));
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_geometry(rng);
    auto x = testing::random_tensor<float>({g.n, g.c, g.h, g.w}, 300 + trial);
    auto y = testing::random_tensor<float>({g.n, g.c, g.h, g.w}, 400 + trial);
    auto w = testing::random_tensor<float>({g.o, g.c, g.k, g.k}, 500 + trial);
    const float a = 0.75f, b = -1.25f;
    const auto lhs = conv2d_same(add(scale(x, a), scale(y, b)), w, Tensor<float>());
    const auto rhs = add(scale(conv2d_same(x, w, Tensor<float>()), a),
                         scale(conv2d_same(y, w, Tensor<float>()), b));
    CHECK(testing::max_abs_diff(lhs.data(), rhs.data()) < 1e-5);
  }
}
