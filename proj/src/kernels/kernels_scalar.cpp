// Portable reference kernels. These define the results the SIMD variants are
// checked against, so they stay deliberately plain.

#include <cmath>

#include "kernels/variants.hpp"

namespace mwdcnn::kernels::scalar {
namespace {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ta == Trans::yes ? a[p * lda + i] : a[i * lda + p];
      if (tb == Trans::yes) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * ldb + p];
      } else {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void adam_update(std::size_t n, const AdamCoefficients<T>& k, const T* grad, T* m, T* v,
                 T* param) {
  const T one_minus_b1 = T(1) - k.beta1;
  const T one_minus_b2 = T(1) - k.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = k.beta1 * m[i] + one_minus_b1 * g;
    v[i] = k.beta2 * v[i] + one_minus_b2 * (g * g);
    const T mhat = m[i] * k.c1;
    const T vhat = v[i] * k.c2;
    param[i] = param[i] - (k.lr * mhat) / (std::sqrt(vhat) + k.eps);
  }
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> t{&gemm<T>, &dot<T>, &axpy<T>, &adam_update<T>};
  return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace mwdcnn::kernels::scalar
