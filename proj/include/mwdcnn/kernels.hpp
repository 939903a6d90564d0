#pragma once

// Arithmetic inner loops shared by the tensor engine and the optimizer.
//
// Every kernel exists as a portable scalar reference and, on x86-64 builds,
// as an AVX2/FMA variant. The variant is chosen once at runtime from the CPU
// feature flags and can be overridden (MWDCNN_ISA=scalar|avx2 or
// set_active_isa) so that the two can be compared against each other.

#include <cstddef>
#include <string_view>
#include <vector>

namespace mwdcnn::kernels {

enum class Isa { scalar, avx2 };

enum class Trans : bool { no = false, yes = true };

std::string_view isa_name(Isa isa);

/// True when the variant was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

/// Every variant usable on this machine, scalar first.
std::vector<Isa> available_isas();

/// The variant used by gemm/dot/axpy/adam_update below.
Isa active_isa();

/// Throws std::invalid_argument when the variant is unavailable.
void set_active_isa(Isa isa);

/// Hyperparameters of one bias-corrected Adam update. `c1` and `c2` are the
/// reciprocal bias corrections 1/(1-beta1^t) and 1/(1-beta2^t).
template <typename T>
struct AdamCoefficients {
  T beta1;
  T beta2;
  T eps;
  T lr;
  T c1;
  T c2;
};

template <typename T>
struct KernelTable {
  // C[m x n] = beta * C + op(A) * op(B); row-major with leading dimensions.
  void (*gemm)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
               const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta,
               T* c, std::size_t ldc);
  T (*dot)(std::size_t n, const T* x, const T* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  void (*adam_update)(std::size_t n, const AdamCoefficients<T>& coeff, const T* grad,
                      T* m, T* v, T* param);
};

/// Kernel table of a specific variant; throws if unavailable.
template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active_table();

template <typename T>
inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
                 std::size_t ldc) {
  active_table<T>().gemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
inline T dot(std::size_t n, const T* x, const T* y) {
  return active_table<T>().dot(n, x, y);
}

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  active_table<T>().axpy(n, alpha, x, y);
}

template <typename T>
inline void adam_update(std::size_t n, const AdamCoefficients<T>& coeff, const T* grad,
                        T* m, T* v, T* param) {
  active_table<T>().adam_update(n, coeff, grad, m, v, param);
}

}  // namespace mwdcnn::kernels
