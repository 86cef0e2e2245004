// AVX2/FMA kernels. Every function that touches 256-bit registers carries a
// target attribute instead of compiling this file with -mavx2, so nothing
// emitted here can leak into the scalar path through shared inline symbols.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "maskvc/kernels/kernels.hpp"

#define MASKVC_AVX2 __attribute__((target("avx2,fma")))

namespace maskvc::kernels::avx2 {
namespace {

constexpr int kMr = 6;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

template <typename T>
struct Lane;

template <>
struct Lane<float> {
  static constexpr int kWidth = 8;
};

template <>
struct Lane<double> {
  static constexpr int kWidth = 4;
};

template <typename T>
constexpr int kNr = 2 * Lane<T>::kWidth;

// op(A) block rows [0, mc) x cols [0, kc), element (i, p) = a[i*rs + p*cs].
template <typename T>
MASKVC_AVX2 void pack_a(const T* a, std::ptrdiff_t rs, std::ptrdiff_t cs, int mc, int kc,
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

// op(B) block rows [0, kc) x cols [0, nc), element (p, j) = b[p*rs + j*cs].
template <typename T>
MASKVC_AVX2 void pack_b(const T* b, std::ptrdiff_t rs, std::ptrdiff_t cs, int kc, int nc,
                        T* out) {
  constexpr int nr = kNr<T>;
  for (int j0 = 0; j0 < nc; j0 += nr) {
    const int cols = std::min(nr, nc - j0);
    const T* base = b + j0 * cs;
    if (cols == nr && cs == 1) {
      for (int p = 0; p < kc; ++p) {
        const T* row = base + p * rs;
        for (int j = 0; j < nr; ++j) out[j] = row[j];
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

MASKVC_AVX2 void micro_kernel(int kc, const float* a, const float* b, float* tile) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    __m256 ar = _mm256_broadcast_ss(a + 0);
    c00 = _mm256_fmadd_ps(ar, b0, c00);
    c01 = _mm256_fmadd_ps(ar, b1, c01);
    ar = _mm256_broadcast_ss(a + 1);
    c10 = _mm256_fmadd_ps(ar, b0, c10);
    c11 = _mm256_fmadd_ps(ar, b1, c11);
    ar = _mm256_broadcast_ss(a + 2);
    c20 = _mm256_fmadd_ps(ar, b0, c20);
    c21 = _mm256_fmadd_ps(ar, b1, c21);
    ar = _mm256_broadcast_ss(a + 3);
    c30 = _mm256_fmadd_ps(ar, b0, c30);
    c31 = _mm256_fmadd_ps(ar, b1, c31);
    ar = _mm256_broadcast_ss(a + 4);
    c40 = _mm256_fmadd_ps(ar, b0, c40);
    c41 = _mm256_fmadd_ps(ar, b1, c41);
    ar = _mm256_broadcast_ss(a + 5);
    c50 = _mm256_fmadd_ps(ar, b0, c50);
    c51 = _mm256_fmadd_ps(ar, b1, c51);
    a += kMr;
    b += 16;
  }
  _mm256_storeu_ps(tile + 0, c00);
  _mm256_storeu_ps(tile + 8, c01);
  _mm256_storeu_ps(tile + 16, c10);
  _mm256_storeu_ps(tile + 24, c11);
  _mm256_storeu_ps(tile + 32, c20);
  _mm256_storeu_ps(tile + 40, c21);
  _mm256_storeu_ps(tile + 48, c30);
  _mm256_storeu_ps(tile + 56, c31);
  _mm256_storeu_ps(tile + 64, c40);
  _mm256_storeu_ps(tile + 72, c41);
  _mm256_storeu_ps(tile + 80, c50);
  _mm256_storeu_ps(tile + 88, c51);
}

MASKVC_AVX2 void micro_kernel(int kc, const double* a, const double* b, double* tile) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (int p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b);
    const __m256d b1 = _mm256_loadu_pd(b + 4);
    __m256d ar = _mm256_broadcast_sd(a + 0);
    c00 = _mm256_fmadd_pd(ar, b0, c00);
    c01 = _mm256_fmadd_pd(ar, b1, c01);
    ar = _mm256_broadcast_sd(a + 1);
    c10 = _mm256_fmadd_pd(ar, b0, c10);
    c11 = _mm256_fmadd_pd(ar, b1, c11);
    ar = _mm256_broadcast_sd(a + 2);
    c20 = _mm256_fmadd_pd(ar, b0, c20);
    c21 = _mm256_fmadd_pd(ar, b1, c21);
    ar = _mm256_broadcast_sd(a + 3);
    c30 = _mm256_fmadd_pd(ar, b0, c30);
    c31 = _mm256_fmadd_pd(ar, b1, c31);
    ar = _mm256_broadcast_sd(a + 4);
    c40 = _mm256_fmadd_pd(ar, b0, c40);
    c41 = _mm256_fmadd_pd(ar, b1, c41);
    ar = _mm256_broadcast_sd(a + 5);
    c50 = _mm256_fmadd_pd(ar, b0, c50);
    c51 = _mm256_fmadd_pd(ar, b1, c51);
    a += kMr;
    b += 8;
  }
  _mm256_storeu_pd(tile + 0, c00);
  _mm256_storeu_pd(tile + 4, c01);
  _mm256_storeu_pd(tile + 8, c10);
  _mm256_storeu_pd(tile + 12, c11);
  _mm256_storeu_pd(tile + 16, c20);
  _mm256_storeu_pd(tile + 20, c21);
  _mm256_storeu_pd(tile + 24, c30);
  _mm256_storeu_pd(tile + 28, c31);
  _mm256_storeu_pd(tile + 32, c40);
  _mm256_storeu_pd(tile + 36, c41);
  _mm256_storeu_pd(tile + 40, c50);
  _mm256_storeu_pd(tile + 44, c51);
}

template <typename T>
MASKVC_AVX2 void write_tile(const T* tile, int rows, int cols, T alpha, T beta, bool first,
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
MASKVC_AVX2 void gemm_blocked(int m, int n, int k, T alpha, const T* a, std::ptrdiff_t a_rs,
                              std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t b_rs,
                              std::ptrdiff_t b_cs, T beta, T* c, int ldc, T* pack_a_buf,
                              T* pack_b_buf) {
  constexpr int nr = kNr<T>;
  alignas(32) T tile[kMr * nr];
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

MASKVC_AVX2 void axpy(int n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  int j = 0;
  for (; j + 8 <= n; j += 8)
    _mm256_storeu_ps(y + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + j), _mm256_loadu_ps(y + j)));
  for (; j < n; ++j) y[j] += alpha * x[j];
}

MASKVC_AVX2 void axpy(int n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  int j = 0;
  for (; j + 4 <= n; j += 4)
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  for (; j < n; ++j) y[j] += alpha * x[j];
}

MASKVC_AVX2 float dot(int n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + j), _mm256_loadu_ps(y + j), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + j + 8), _mm256_loadu_ps(y + j + 8), acc1);
  }
  for (; j + 8 <= n; j += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + j), _mm256_loadu_ps(y + j), acc0);
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, _mm256_add_ps(acc0, acc1));
  float s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
            ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

MASKVC_AVX2 double dot(int n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + j + 4), _mm256_loadu_pd(y + j + 4), acc1);
  }
  for (; j + 4 <= n; j += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j), acc0);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

// Few output rows (or rank-1 updates): panel packing would waste most of
// the micro-kernel, so stream rows of op(B) (axpy) or columns (dot).
template <typename T>
MASKVC_AVX2 void gemm_few_rows(int m, int n, int k, T alpha, const T* a, std::ptrdiff_t a_rs,
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
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
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
  if (m < kMr || k == 1) {
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

namespace {

MASKVC_AVX2 void adam_avx2(float* param, const float* grad, float* m, float* v,
                           std::size_t n, const AdamStep<float>& s) {
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 omb1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 omb2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 bc1 = _mm256_set1_ps(s.bias1);
  const __m256 bc2 = _mm256_set1_ps(s.bias2);
  const __m256 lr = _mm256_set1_ps(s.lr);
  const __m256 eps = _mm256_set1_ps(s.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, g));
    __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(omb2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 m_hat = _mm256_div_ps(mi, bc1);
    const __m256 v_hat = _mm256_div_ps(vi, bc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, m_hat),
                                      _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
  }
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * (g * g);
    const float m_hat = m[i] / s.bias1;
    const float v_hat = v[i] / s.bias2;
    param[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

MASKVC_AVX2 void adam_avx2(double* param, const double* grad, double* m, double* v,
                           std::size_t n, const AdamStep<double>& s) {
  const __m256d b1 = _mm256_set1_pd(s.beta1);
  const __m256d b2 = _mm256_set1_pd(s.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d bc1 = _mm256_set1_pd(s.bias1);
  const __m256d bc2 = _mm256_set1_pd(s.bias2);
  const __m256d lr = _mm256_set1_pd(s.lr);
  const __m256d eps = _mm256_set1_pd(s.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
    __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, bc1);
    const __m256d v_hat = _mm256_div_pd(vi, bc2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat),
                                       _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * (g * g);
    const double m_hat = m[i] / s.bias1;
    const double v_hat = v[i] / s.bias2;
    param[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

// exp(x) for x in float range: n = round(x / ln2), r = x - n ln2 split in
// two parts, degree-6 minimax polynomial on r, then scale by 2^n.
MASKVC_AVX2 __m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(_mm256_max_ps(x, _mm256_set1_ps(-87.3f)), _mm256_set1_ps(88.3f));
  const __m256 n = _mm256_round_ps(_mm256_mul_ps(x, _mm256_set1_ps(1.44269504088896341f)),
                                   _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256 r = _mm256_fnmadd_ps(n, _mm256_set1_ps(0.693359375f), x);
  r = _mm256_fnmadd_ps(n, _mm256_set1_ps(-2.12194440e-4f), r);
  __m256 p = _mm256_set1_ps(1.9875691500e-4f);
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(1.3981999507e-3f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(8.3334519073e-3f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(4.1665795894e-2f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(1.6666665459e-1f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(5.0000001201e-1f));
  p = _mm256_fmadd_ps(p, _mm256_mul_ps(r, r), _mm256_add_ps(r, _mm256_set1_ps(1.0f)));
  const __m256i bits = _mm256_slli_epi32(
      _mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(p, _mm256_castsi256_ps(bits));
}

MASKVC_AVX2 __m256 sigmoid_ps(__m256 b) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(), b));
  return _mm256_div_ps(one, _mm256_add_ps(one, e));
}

MASKVC_AVX2 void glu_forward_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), sigmoid_ps(_mm256_loadu_ps(b + i))));
  if (i < n) scalar::glu_forward(a + i, b + i, out + i, n - i);
}

MASKVC_AVX2 void glu_backward_avx2(const float* a, const float* b, const float* g, float* da,
                                   float* db, std::size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 s = sigmoid_ps(_mm256_loadu_ps(b + i));
    const __m256 gi = _mm256_loadu_ps(g + i);
    _mm256_storeu_ps(da + i, _mm256_mul_ps(gi, s));
    const __m256 ga = _mm256_mul_ps(gi, _mm256_loadu_ps(a + i));
    _mm256_storeu_ps(db + i, _mm256_mul_ps(_mm256_mul_ps(ga, s), _mm256_sub_ps(one, s)));
  }
  if (i < n) scalar::glu_backward(a + i, b + i, g + i, da + i, db + i, n - i);
}

}  // namespace

template <>
void glu_forward<float>(const float* a, const float* b, float* out, std::size_t n) {
  glu_forward_avx2(a, b, out, n);
}
template <>
void glu_forward<double>(const double* a, const double* b, double* out, std::size_t n) {
  scalar::glu_forward(a, b, out, n);
}
template <>
void glu_backward<float>(const float* a, const float* b, const float* g, float* da, float* db,
                         std::size_t n) {
  glu_backward_avx2(a, b, g, da, db, n);
}
template <>
void glu_backward<double>(const double* a, const double* b, const double* g, double* da,
                          double* db, std::size_t n) {
  scalar::glu_backward(a, b, g, da, db, n);
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 const AdamStep<T>& step) {
  adam_avx2(param.data(), grad.data(), m.data(), v.data(), param.size(), step);
}

template void gemm<float>(Trans, Trans, int, int, int, float, const float*, int, const float*,
                          int, float, float*, int);
template void gemm<double>(Trans, Trans, int, int, int, double, const double*, int,
                           const double*, int, double, double*, int);
template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                 std::span<float>, const AdamStep<float>&);
template void adam_update<double>(std::span<double>, std::span<const double>,
                                  std::span<double>, std::span<double>,
                                  const AdamStep<double>&);

}  // namespace maskvc::kernels::avx2
