#pragma once

// Dense inner-loop kernels. Every kernel has a portable scalar reference and,
// on x86-64, an AVX2+FMA variant. The variant is chosen once at startup from
// CPUID; LWDEPTH_ISA=scalar in the environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace lwdepth::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa) noexcept;

/// True if the variant was compiled in and the CPU supports it.
bool isa_available(Isa isa) noexcept;

Isa active_isa() noexcept;

/// Overrides the dispatch choice. Not thread-safe; intended for tests and
/// benchmarks that compare variants.
void set_active_isa(Isa isa);

template <typename T>
struct KernelTable {
  // C[m x n] += op(A)[m x k] * B[k x n], op(A)(i, p) = a[i * a_row + p * a_col].
  // a_row = lda, a_col = 1 is the plain product; a_row = 1, a_col = lda reads
  // A transposed.
  void (*gemm_bcast)(int m, int n, int k, const T* a, std::ptrdiff_t a_row,
                     std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb, T* c,
                     std::ptrdiff_t ldc);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                  const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc);
};

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

/// C += op(A) * B with A addressed through explicit row and column strides.
template <typename T>
inline void gemm_bcast(int m, int n, int k, const T* a, std::ptrdiff_t a_row,
                       std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb, T* c,
                       std::ptrdiff_t ldc) {
  active<T>().gemm_bcast(m, n, k, a, a_row, a_col, b, ldb, c, ldc);
}

/// C += A * B, all row-major.
template <typename T>
inline void gemm_nn(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                    const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  active<T>().gemm_bcast(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

/// C += A^T * B where A is stored k x m.
template <typename T>
inline void gemm_tn(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                    const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  active<T>().gemm_bcast(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

/// C += A * B^T where B is stored n x k.
template <typename T>
inline void gemm_nt(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                    const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  active<T>().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
}

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
template <typename T>
const KernelTable<T>* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace lwdepth::kernels
