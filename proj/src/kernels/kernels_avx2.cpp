// AVX2/FMA kernels. Compiled with -mavx2 -mfma; only reached through the
// dispatcher after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "kernels/variants.hpp"

namespace mwdcnn::kernels::avx2 {
namespace {

template <typename T>
struct Simd;

template <>
struct Simd<float> {
  using Reg = __m256;
  static constexpr std::size_t lanes = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg set1(float x) { return _mm256_set1_ps(x); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg r) { _mm256_storeu_ps(p, r); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_ps(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_ps(a); }
  static float hsum(Reg r) {
    __m128 lo = _mm256_castps256_ps128(r);
    __m128 hi = _mm256_extractf128_ps(r, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Simd<double> {
  using Reg = __m256d;
  static constexpr std::size_t lanes = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg set1(double x) { return _mm256_set1_pd(x); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg r) { _mm256_storeu_pd(p, r); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_pd(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_pd(a); }
  static double hsum(Reg r) {
    __m128d lo = _mm256_castpd256_pd128(r);
    __m128d hi = _mm256_extractf128_pd(r, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

// Register tile: kMr rows by two vectors of columns.
constexpr std::size_t kMr = 6;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 72;
constexpr std::size_t kNc = 4096;

template <typename T>
constexpr std::size_t kNr = 2 * Simd<T>::lanes;

template <typename T>
void pack_a(Trans ta, const T* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, T* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMr; ++r) {
        T value = 0;
        if (r < rows) {
          const std::size_t i = i0 + ir + r;
          const std::size_t col = p0 + p;
          value = ta == Trans::yes ? a[col * lda + i] : a[i * lda + col];
        }
        *out++ = value;
      }
    }
  }
}

template <typename T>
void pack_b(Trans tb, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t nr = kNr<T>;
  for (std::size_t jr = 0; jr < nc; jr += nr) {
    const std::size_t cols = std::min(nr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      const std::size_t row = p0 + p;
      if (tb == Trans::no && cols == nr) {
        const T* src = b + row * ldb + j0 + jr;
        std::copy(src, src + nr, out);
        out += nr;
        continue;
      }
      for (std::size_t j = 0; j < nr; ++j) {
        T value = 0;
        if (j < cols) {
          const std::size_t col = j0 + jr + j;
          value = tb == Trans::yes ? b[col * ldb + row] : b[row * ldb + col];
        }
        *out++ = value;
      }
    }
  }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* a, const T* b, std::size_t ldb, T* c,
                  std::size_t ldc, std::size_t rows, std::size_t cols) {
  using S = Simd<T>;
  using Reg = typename S::Reg;
  constexpr std::size_t lanes = S::lanes;
  constexpr std::size_t nr = kNr<T>;

  Reg acc0[kMr];
  Reg acc1[kMr];
  for (std::size_t r = 0; r < kMr; ++r) {
    acc0[r] = S::zero();
    acc1[r] = S::zero();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const Reg b0 = S::load(b);
    const Reg b1 = S::load(b + lanes);
    for (std::size_t r = 0; r < kMr; ++r) {
      const Reg ar = S::set1(a[r]);
      acc0[r] = S::fmadd(ar, b0, acc0[r]);
      acc1[r] = S::fmadd(ar, b1, acc1[r]);
    }
    a += kMr;
    b += ldb;
  }

  if (rows == kMr && cols == nr) {
    for (std::size_t r = 0; r < kMr; ++r) {
      T* crow = c + r * ldc;
      S::store(crow, S::add(S::load(crow), acc0[r]));
      S::store(crow + lanes, S::add(S::load(crow + lanes), acc1[r]));
    }
    return;
  }
  alignas(32) T tile[kMr * nr];
  for (std::size_t r = 0; r < kMr; ++r) {
    S::store(tile + r * nr, acc0[r]);
    S::store(tile + r * nr + lanes, acc1[r]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r * nr + j];
  }
}

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  constexpr std::size_t nr = kNr<T>;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0) return;

  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;
  packed_a.resize(((kMc + kMr - 1) / kMr) * kMr * kKc);
  packed_b.resize(((kNc + nr - 1) / nr) * nr * kKc);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      // Untransposed B made of whole column tiles is read in place.
      const bool direct_b = tb == Trans::no && nc % nr == 0;
      if (!direct_b) pack_b(tb, b, ldb, pc, kc, jc, nc, packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(ta, a, lda, ic, mc, pc, kc, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          const std::size_t cols = std::min(nr, nc - jr);
          const T* bp = direct_b ? b + pc * ldb + jc + jr : packed_b.data() + (jr / nr) * nr * kc;
          const std::size_t bstride = direct_b ? ldb : nr;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t rows = std::min(kMr, mc - ir);
            const T* ap = packed_a.data() + (ir / kMr) * kMr * kc;
            micro_kernel(kc, ap, bp, bstride, c + (ic + ir) * ldc + jc + jr, ldc, rows, cols);
          }
        }
      }
    }
  }
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  using S = Simd<T>;
  constexpr std::size_t lanes = S::lanes;
  auto acc0 = S::zero();
  auto acc1 = S::zero();
  std::size_t i = 0;
  for (; i + 2 * lanes <= n; i += 2 * lanes) {
    acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
    acc1 = S::fmadd(S::load(x + i + lanes), S::load(y + i + lanes), acc1);
  }
  T acc = S::hsum(S::add(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using S = Simd<T>;
  constexpr std::size_t lanes = S::lanes;
  const auto va = S::set1(alpha);
  std::size_t i = 0;
  for (; i + lanes <= n; i += lanes) {
    S::store(y + i, S::add(S::load(y + i), S::mul(va, S::load(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Same operation order as the scalar reference, no FMA, so results agree bit
// for bit.
template <typename T>
void adam_update(std::size_t n, const AdamCoefficients<T>& k, const T* grad, T* m, T* v,
                 T* param) {
  using S = Simd<T>;
  constexpr std::size_t lanes = S::lanes;
  const T one_minus_b1 = T(1) - k.beta1;
  const T one_minus_b2 = T(1) - k.beta2;
  const auto b1 = S::set1(k.beta1);
  const auto b2 = S::set1(k.beta2);
  const auto omb1 = S::set1(one_minus_b1);
  const auto omb2 = S::set1(one_minus_b2);
  const auto c1 = S::set1(k.c1);
  const auto c2 = S::set1(k.c2);
  const auto lr = S::set1(k.lr);
  const auto eps = S::set1(k.eps);
  std::size_t i = 0;
  for (; i + lanes <= n; i += lanes) {
    const auto g = S::load(grad + i);
    const auto mi = S::add(S::mul(b1, S::load(m + i)), S::mul(omb1, g));
    const auto vi = S::add(S::mul(b2, S::load(v + i)), S::mul(omb2, S::mul(g, g)));
    S::store(m + i, mi);
    S::store(v + i, vi);
    const auto mhat = S::mul(mi, c1);
    const auto vhat = S::mul(vi, c2);
    const auto step = S::div(S::mul(lr, mhat), S::add(S::sqrt(vhat), eps));
    S::store(param + i, S::sub(S::load(param + i), step));
  }
  for (; i < n; ++i) {
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

}  // namespace mwdcnn::kernels::avx2
