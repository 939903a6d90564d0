#pragma once

// Shared test helpers: seeded random tensors and independent reference
// implementations written without the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mwdcnn/rng.hpp"
#include "mwdcnn/tensor.hpp"

namespace testing {

using mwdcnn::Shape;
using mwdcnn::Tensor;

template <typename T>
std::vector<T> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  mwdcnn::CounterRng rng(mwdcnn::derive_key(seed, {0x7465737473ULL}));
  std::vector<T> out(n);
  for (auto& v : out) v = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false,
                        double lo = -1.0, double hi = 1.0) {
  const auto n = mwdcnn::numel(shape);
  return Tensor<T>::from(std::move(shape), random_values<T>(n, seed, lo, hi), requires_grad);
}

template <typename A, typename B>
double max_abs_diff(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  }
  return worst;
}

template <typename A, typename B>
double max_abs_diff(const std::vector<A>& a, const std::vector<B>& b) {
  return max_abs_diff(std::span<const A>(a), std::span<const B>(b));
}

/// Six-loop zero-padded stride-1 cross-correlation accumulated in double.
/// x: N x C x H x W, w: O x C x k x k, b: O or empty. Output N x O x Ho x Wo.
template <typename T>
std::vector<double> naive_conv(std::span<const T> x, std::span<const T> w, std::span<const T> b,
                               std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                               std::size_t o, std::size_t k, std::size_t pad) {
  const std::size_t ho = h + 2 * pad - k + 1, wo = wd + 2 * pad - k + 1;
  std::vector<double> y(n * o * ho * wo);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t yy = 0; yy < ho; ++yy)
        for (std::size_t xx = 0; xx < wo; ++xx) {
          double acc = b.empty() ? 0.0 : double(b[oc]);
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx) {
                const long iy = long(yy + dy) - long(pad), ix = long(xx + dx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                acc += double(x[((s * c + ic) * h + std::size_t(iy)) * wd + std::size_t(ix)]) *
                       double(w[((oc * c + ic) * k + dy) * k + dx]);
              }
          y[((s * o + oc) * ho + yy) * wo + xx] = acc;
        }
  return y;
}

/// Naive conv on tensors with same padding; bias may be undefined.
template <typename T>
std::vector<double> naive_conv_same(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t k = w.dim(2);
  return naive_conv<T>(x.data(), w.data(), b.defined() ? b.data() : std::span<const T>(), x.dim(0),
                       x.dim(1), x.dim(2), x.dim(3), w.dim(0), k, (k - 1) / 2);
}

/// Loss = sum(out * probe) for a fixed probe, so every output element
/// contributes with a distinct weight.
template <typename T>
std::vector<T> probe_weights(std::size_t n, std::uint64_t seed) {
  return random_values<T>(n, seed ^ 0x9e3779b97f4a7c15ULL, -1.0, 1.0);
}

}  // namespace testing
