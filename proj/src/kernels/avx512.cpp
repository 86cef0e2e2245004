// AVX-512 GEMM. Same blocking scheme as the AVX2 variant with an 8 x 2-vector
// register tile; Adam reuses the AVX2 update (it is memory bound).

#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "maskvc/kernels/kernels.hpp"

#define MASKVC_AVX512 __attribute__((target("avx512f,avx512dq,avx512vl,avx2,fma")))

namespace maskvc::kernels::avx512 {
namespace {

constexpr int kMr = 8;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

template <typename T>
constexpr int kNr = sizeof(T) == 4 ? 32 : 16;

template <typename T>
MASKVC_AVX512 void pack_a(const T* a, std::ptrdiff_t rs, std::ptrdiff_t cs, int mc, int kc,
                          T* out) {
  for (int i0 = 0; i0 < mc; i0 += kMr) {
    const int rows = std::min(kMr, mc - i0);
    const T* base = a + i0 * rs;
    for (int p = 0; p < kc; ++p) {
      int r = 0;
      for (; r < rows; ++r) out[r] = base[r * rs + p * cs];
      for (; r < kMr; ++r) out[r] = T(0);
      out += kMr;
    }
  }
}

template <typename T>
MASKVC_AVX512 void pack_b(const T* b, std::ptrdiff_t rs, std::ptrdiff_t cs, int kc, int nc,
                          T* out) {
  constexpr int nr = kNr<T>;
  for (int j0 = 0; j0 < nc; j0 += nr) {
    const int cols = std::min(nr, nc - j0);
    const T* base = b + j0 * cs;
    if (cols == nr && cs == 1) {
      for (int p = 0; p < kc; ++p) {
        std::copy_n(base + p * rs, nr, out);
        out += nr;
      }
      continue;
    }
    for (int p = 0; p < kc; ++p) {
      int j = 0;
      for (; j < cols; ++j) out[j] = base[p * rs + j * cs];
      for (; j < nr; ++j) out[j] = T(0);
      out += nr;
    }
  }
}

#define MASKVC_ROW_F(r)                         \
  ar = _mm512_set1_ps(a[r]);                    \
  c##r##0 = _mm512_fmadd_ps(ar, b0, c##r##0);   \
  c##r##1 = _mm512_fmadd_ps(ar, b1, c##r##1);

MASKVC_AVX512 void micro_kernel(int kc, const float* a, const float* b, float* tile) {
  __m512 c00 = _mm512_setzero_ps(), c01 = _mm512_setzero_ps();
  __m512 c10 = _mm512_setzero_ps(), c11 = _mm512_setzero_ps();
  __m512 c20 = _mm512_setzero_ps(), c21 = _mm512_setzero_ps();
  __m512 c30 = _mm512_setzero_ps(), c31 = _mm512_setzero_ps();
  __m512 c40 = _mm512_setzero_ps(), c41 = _mm512_setzero_ps();
  __m512 c50 = _mm512_setzero_ps(), c51 = _mm512_setzero_ps();
  __m512 c60 = _mm512_setzero_ps(), c61 = _mm512_setzero_ps();
  __m512 c70 = _mm512_setzero_ps(), c71 = _mm512_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b);
    const __m512 b1 = _mm512_loadu_ps(b + 16);
    __m512 ar;
    MASKVC_ROW_F(0)
    MASKVC_ROW_F(1)
    MASKVC_ROW_F(2)
    MASKVC_ROW_F(3)
    MASKVC_ROW_F(4)
    MASKVC_ROW_F(5)
    MASKVC_ROW_F(6)
    MASKVC_ROW_F(7)
    a += kMr;
    b += 32;
  }
  const __m512 acc[] = {c00, c01, c10, c11, c20, c21, c30, c31,
                        c40, c41, c50, c51, c60, c61, c70, c71};
  for (int i = 0; i < 16; ++i) _mm512_storeu_ps(tile + 16 * i, acc[i]);
}

#undef MASKVC_ROW_F

#define MASKVC_ROW_D(r)                         \
  ar = _mm512_set1_pd(a[r]);                    \
  c##r##0 = _mm512_fmadd_pd(ar, b0, c##r##0);   \
  c##r##1 = _mm512_fmadd_pd(ar, b1, c##r##1);

MASKVC_AVX512 void micro_kernel(int kc, const double* a, const double* b, double* tile) {
  __m512d c00 = _mm512_setzero_pd(), c01 = _mm512_setzero_pd();
  __m512d c10 = _mm512_setzero_pd(), c11 = _mm512_setzero_pd();
  __m512d c20 = _mm512_setzero_pd(), c21 = _mm512_setzero_pd();
  __m512d c30 = _mm512_setzero_pd(), c31 = _mm512_setzero_pd();
  __m512d c40 = _mm512_setzero_pd(), c41 = _mm512_setzero_pd();
  __m512d c50 = _mm512_setzero_pd(), c51 = _mm512_setzero_pd();
  __m512d c60 = _mm512_setzero_pd(), c61 = _mm512_setzero_pd();
  __m512d c70 = _mm512_setzero_pd(), c71 = _mm512_setzero_pd();
  for (int p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b);
    const __m512d b1 = _mm512_loadu_pd(b + 8);
    __m512d ar;
    MASKVC_ROW_D(0)
    MASKVC_ROW_D(1)
    MASKVC_ROW_D(2)
    MASKVC_ROW_D(3)
    MASKVC_ROW_D(4)
    MASKVC_ROW_D(5)
    MASKVC_ROW_D(6)
    MASKVC_ROW_D(7)
    a += kMr;
    b += 16;
  }
  const __m512d acc[] = {c00, c01, c10, c11, c20, c21, c30, c31,
                         c40, c41, c50, c51, c60, c61, c70, c71};
  for (int i = 0; i < 16; ++i) _mm512_storeu_pd(tile + 8 * i, acc[i]);
}

#undef MASKVC_ROW_D

template <typename T>
MASKVC_AVX512 void write_tile(const T* tile, int rows, int cols, T alpha, T beta, bool first,
                              T* c, int ldc) {
  constexpr int nr = kNr<T>;
  for (int r = 0; r < rows; ++r) {
    const T* t = tile + r * nr;
    T* out = c + static_cast<std::ptrdiff_t>(r) * ldc;
    if (!first) {
      for (int j = 0; j < cols; ++j) out[j] += alpha * t[j];
    } else if (beta == T(0)) {
      for (int j = 0; j < cols; ++j) out[j] = alpha * t[j];
    } else {
      for (int j = 0; j < cols; ++j) out[j] = alpha * t[j] + beta * out[j];
    }
  }
}

template <typename T>
MASKVC_AVX512 void gemm_blocked(int m, int n, int k, T alpha, const T* a, std::ptrdiff_t a_rs,
                                std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t b_rs,
                                std::ptrdiff_t b_cs, T beta, T* c, int ldc, T* pack_a_buf,
                                T* pack_b_buf) {
  constexpr int nr = kNr<T>;
  alignas(64) T tile[kMr * nr];
  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = std::min(kNc, n - jc);
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = std::min(kKc, k - pc);
      pack_b(b + pc * b_rs + jc * b_cs, b_rs, b_cs, kc, nc, pack_b_buf);
      for (int ic = 0; ic < m; ic += kMc) {
        const int mc = std::min(kMc, m - ic);
        pack_a(a + ic * a_rs + pc * a_cs, a_rs, a_cs, mc, kc, pack_a_buf);
        for (int jr = 0; jr < nc; jr += nr) {
          const int cols = std::min(nr, nc - jr);
          const T* pb = pack_b_buf + static_cast<std::ptrdiff_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            const int rows = std::min(kMr, mc - ir);
            const T* pa = pack_a_buf + static_cast<std::ptrdiff_t>(ir) * kc;
            micro_kernel(kc, pa, pb, tile);
            write_tile(tile, rows, cols, alpha, beta, pc == 0,
                       c + static_cast<std::ptrdiff_t>(ic + ir) * ldc + jc + jr, ldc);
          }
        }
      }
    }
  }
}

MASKVC_AVX512 void axpy(int n, float alpha, const float* x, float* y) {
  const __m512 va = _mm512_set1_ps(alpha);
  int j = 0;
  for (; j + 16 <= n; j += 16)
    _mm512_storeu_ps(y + j, _mm512_fmadd_ps(va, _mm512_loadu_ps(x + j), _mm512_loadu_ps(y + j)));
  for (; j < n; ++j) y[j] += alpha * x[j];
}

MASKVC_AVX512 void axpy(int n, double alpha, const double* x, double* y) {
  const __m512d va = _mm512_set1_pd(alpha);
  int j = 0;
  for (; j + 8 <= n; j += 8)
    _mm512_storeu_pd(y + j, _mm512_fmadd_pd(va, _mm512_loadu_pd(x + j), _mm512_loadu_pd(y + j)));
  for (; j < n; ++j) y[j] += alpha * x[j];
}

MASKVC_AVX512 float dot(int n, const float* x, const float* y) {
  __m512 acc0 = _mm512_setzero_ps();
  __m512 acc1 = _mm512_setzero_ps();
  int j = 0;
  for (; j + 32 <= n; j += 32) {
    acc0 = _mm512_fmadd_ps(_mm512_loadu_ps(x + j), _mm512_loadu_ps(y + j), acc0);
    acc1 = _mm512_fmadd_ps(_mm512_loadu_ps(x + j + 16), _mm512_loadu_ps(y + j + 16), acc1);
  }
  for (; j + 16 <= n; j += 16)
    acc0 = _mm512_fmadd_ps(_mm512_loadu_ps(x + j), _mm512_loadu_ps(y + j), acc0);
  float s = _mm512_reduce_add_ps(_mm512_add_ps(acc0, acc1));
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

MASKVC_AVX512 double dot(int n, const double* x, const double* y) {
  __m512d acc0 = _mm512_setzero_pd();
  __m512d acc1 = _mm512_setzero_pd();
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(x + j), _mm512_loadu_pd(y + j), acc0);
    acc1 = _mm512_fmadd_pd(_mm512_loadu_pd(x + j + 8), _mm512_loadu_pd(y + j + 8), acc1);
  }
  for (; j + 8 <= n; j += 8)
    acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(x + j), _mm512_loadu_pd(y + j), acc0);
  double s = _mm512_reduce_add_pd(_mm512_add_pd(acc0, acc1));
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

template <typename T>
MASKVC_AVX512 void gemm_few_rows(int m, int n, int k, T alpha, const T* a, std::ptrdiff_t a_rs,
                                 std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t b_rs,
                                 std::ptrdiff_t b_cs, T beta, T* c, int ldc, T* row_buf) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (b_cs == 1) {
      if (beta == T(0)) {
        for (int j = 0; j < n; ++j) crow[j] = T(0);
      } else {
        for (int j = 0; j < n; ++j) crow[j] *= beta;
      }
      for (int p = 0; p < k; ++p) axpy(n, alpha * a[i * a_rs + p * a_cs], b + p * b_rs, crow);
    } else {
      const T* arow = a + i * a_rs;
      if (a_cs != 1) {
        for (int p = 0; p < k; ++p) row_buf[p] = arow[p * a_cs];
        arow = row_buf;
      }
      for (int j = 0; j < n; ++j) {
        const T s = alpha * dot(k, arow, b + j * b_cs);
        crow[j] = beta == T(0) ? s : s + beta * crow[j];
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch(int which) {
  thread_local std::vector<T> buffers[2];
  return buffers[which];
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T& out = c[static_cast<std::ptrdiff_t>(i) * ldc + j];
        out = beta == T(0) ? T(0) : beta * out;
      }
    return;
  }
  constexpr int nr = kNr<T>;
  const std::ptrdiff_t a_rs = ta == Trans::kYes ? 1 : lda;
  const std::ptrdiff_t a_cs = ta == Trans::kYes ? lda : 1;
  const std::ptrdiff_t b_rs = tb == Trans::kYes ? 1 : ldb;
  const std::ptrdiff_t b_cs = tb == Trans::kYes ? ldb : 1;
  auto& abuf = scratch<T>(0);
  if (m < kMr / 2 || k == 1) {
    if (abuf.size() < static_cast<std::size_t>(k)) abuf.resize(static_cast<std::size_t>(k));
    gemm_few_rows<T>(m, n, k, alpha, a, a_rs, a_cs, b, b_rs, b_cs, beta, c, ldc, abuf.data());
    return;
  }
  auto& bbuf = scratch<T>(1);
  const std::size_t a_need = static_cast<std::size_t>(kMc + kMr) * kKc;
  const std::size_t b_need =
      static_cast<std::size_t>((std::min(kNc, n) + nr - 1) / nr * nr) * kKc;
  if (abuf.size() < a_need) abuf.resize(a_need);
  if (bbuf.size() < b_need) bbuf.resize(b_need);
  gemm_blocked<T>(m, n, k, alpha, a, a_rs, a_cs, b, b_rs, b_cs, beta, c, ldc, abuf.data(),
                  bbuf.data());
}

template void gemm<float>(Trans, Trans, int, int, int, float, const float*, int, const float*,
                          int, float, float*, int);
template void gemm<double>(Trans, Trans, int, int, int, double, const double*, int,
                           const double*, int, double, double*, int);

}  // namespace maskvc::kernels::avx512
