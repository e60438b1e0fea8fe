#include "lwdepth/kernels.hpp"

namespace lwdepth::kernels::detail {
namespace {

template <typename T>
void gemm_bcast_ref(int m, int n, int k, const T* a, std::ptrdiff_t a_row,
                    std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb, T* c,
                    std::ptrdiff_t ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (int p = 0; p < k; ++p) {
      const T av = a[i * a_row + p * a_col];
      const T* brow = b + p * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_ref(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                 const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + j * ldb;
      T acc{};
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * ldc + j] += acc;
    }
  }
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> t{&gemm_bcast_ref<T>, &gemm_nt_ref<T>};
  return t;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace lwdepth::kernels::detail
