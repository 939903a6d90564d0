#pragma once

#include "mwdcnn/kernels.hpp"

namespace mwdcnn::kernels {

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}  // namespace scalar

#if defined(MWDCNN_HAVE_AVX2)
namespace avx2 {
template <typename T>
const KernelTable<T>& table();
}  // namespace avx2
#endif

}  // namespace mwdcnn::kernels
