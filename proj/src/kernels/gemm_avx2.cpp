// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPUID check.

#include <immintrin.h>

#include "lwdepth/kernels.hpp"

namespace lwdepth::kernels::detail {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr int kLanes = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg set1(float v) { return _mm256_set1_ps(v); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr int kLanes = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg set1(double v) { return _mm256_set1_pd(v); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// Register block: kRows rows of C by two vectors of columns.
template <typename T, int kRows>
inline void block_bcast(int k, const T* a, std::ptrdiff_t a_row,
                        std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb,
                        T* c, std::ptrdiff_t ldc) {
  using V = Vec<T>;
  typename V::Reg acc[kRows][2];
  for (int r = 0; r < kRows; ++r) acc[r][0] = acc[r][1] = V::zero();
  for (int p = 0; p < k; ++p) {
    const T* brow = b + p * ldb;
    const auto b0 = V::load(brow);
    const auto b1 = V::load(brow + V::kLanes);
    for (int r = 0; r < kRows; ++r) {
      const auto av = V::set1(a[r * a_row + p * a_col]);
      acc[r][0] = V::fma(av, b0, acc[r][0]);
      acc[r][1] = V::fma(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < kRows; ++r) {
    T* crow = c + r * ldc;
    V::store(crow, V::add(V::load(crow), acc[r][0]));
    V::store(crow + V::kLanes, V::add(V::load(crow + V::kLanes), acc[r][1]));
  }
}

template <typename T, int kRows>
inline void block_bcast_single(int k, const T* a, std::ptrdiff_t a_row,
                               std::ptrdiff_t a_col, const T* b,
                               std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  using V = Vec<T>;
  typename V::Reg acc[kRows];
  for (int r = 0; r < kRows; ++r) acc[r] = V::zero();
  for (int p = 0; p < k; ++p) {
    const auto b0 = V::load(b + p * ldb);
    for (int r = 0; r < kRows; ++r) {
      acc[r] = V::fma(V::set1(a[r * a_row + p * a_col]), b0, acc[r]);
    }
  }
  for (int r = 0; r < kRows; ++r) {
    T* crow = c + r * ldc;
    V::store(crow, V::add(V::load(crow), acc[r]));
  }
}

template <typename T, int kRows>
inline void rows_bcast(int n, int k, const T* a, std::ptrdiff_t a_row,
                       std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb,
                       T* c, std::ptrdiff_t ldc) {
  constexpr int L = Vec<T>::kLanes;
  int j = 0;
  for (; j + 2 * L <= n; j += 2 * L) {
    block_bcast<T, kRows>(k, a, a_row, a_col, b + j, ldb, c + j, ldc);
  }
  for (; j + L <= n; j += L) {
    block_bcast_single<T, kRows>(k, a, a_row, a_col, b + j, ldb, c + j, ldc);
  }
  for (; j < n; ++j) {
    for (int r = 0; r < kRows; ++r) {
      T acc{};
      for (int p = 0; p < k; ++p) acc += a[r * a_row + p * a_col] * b[p * ldb + j];
      c[r * ldc + j] += acc;
    }
  }
}

template <typename T>
void gemm_bcast_avx2(int m, int n, int k, const T* a, std::ptrdiff_t a_row,
                     std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb, T* c,
                     std::ptrdiff_t ldc) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    rows_bcast<T, 4>(n, k, a + i * a_row, a_row, a_col, b, ldb, c + i * ldc, ldc);
  }
  for (; i < m; ++i) {
    rows_bcast<T, 1>(n, k, a + i * a_row, a_row, a_col, b, ldb, c + i * ldc, ldc);
  }
}

template <typename T>
void gemm_nt_avx2(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                  const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  using V = Vec<T>;
  constexpr int L = V::kLanes;
  const int kv = k - k % L;
  for (int i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + (j + 0) * ldb;
      const T* b1 = b + (j + 1) * ldb;
      const T* b2 = b + (j + 2) * ldb;
      const T* b3 = b + (j + 3) * ldb;
      auto s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
      for (int p = 0; p < kv; p += L) {
        const auto av = V::load(arow + p);
        s0 = V::fma(av, V::load(b0 + p), s0);
        s1 = V::fma(av, V::load(b1 + p), s1);
        s2 = V::fma(av, V::load(b2 + p), s2);
        s3 = V::fma(av, V::load(b3 + p), s3);
      }
      T r0 = V::hsum(s0), r1 = V::hsum(s1), r2 = V::hsum(s2), r3 = V::hsum(s3);
      for (int p = kv; p < k; ++p) {
        r0 += arow[p] * b0[p];
        r1 += arow[p] * b1[p];
        r2 += arow[p] * b2[p];
        r3 += arow[p] * b3[p];
      }
      T* crow = c + i * ldc + j;
      crow[0] += r0;
      crow[1] += r1;
      crow[2] += r2;
      crow[3] += r3;
    }
    for (; j < n; ++j) {
      const T* brow = b + j * ldb;
      auto s = V::zero();
      for (int p = 0; p < kv; p += L) s = V::fma(V::load(arow + p), V::load(brow + p), s);
      T r = V::hsum(s);
      for (int p = kv; p < k; ++p) r += arow[p] * brow[p];
      c[i * ldc + j] += r;
    }
  }
}

}  // namespace

template <typename T>
const KernelTable<T>* avx2_table() {
  static const KernelTable<T> t{&gemm_bcast_avx2<T>, &gemm_nt_avx2<T>};
  return &t;
}

template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();

}  // namespace lwdepth::kernels::detail
