#include <cmath>

#include "maskvc/kernels/kernels.hpp"

namespace maskvc::kernels::scalar {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  const bool at = ta == Trans::kYes;
  const bool bt = tb == Trans::kYes;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = at ? a[p * lda + i] : a[i * lda + p];
        const T bv = bt ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      T& out = c[i * ldc + j];
      out = beta == T(0) ? alpha * acc : alpha * acc + beta * out;
    }
  }
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m,
                 std::span<T> v, const AdamStep<T>& s) {
  const T one_minus_b1 = T(1) - s.beta1;
  const T one_minus_b2 = T(1) - s.beta2;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const T m_hat = m[i] / s.bias1;
    const T v_hat = v[i] / s.bias2;
    param[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

template <typename T>
void glu_forward(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * (T(1) / (T(1) + std::exp(-b[i])));
}

template <typename T>
void glu_backward(const T* a, const T* b, const T* g, T* da, T* db, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T s = T(1) / (T(1) + std::exp(-b[i]));
    da[i] = g[i] * s;
    db[i] = g[i] * a[i] * s * (T(1) - s);
  }
}

template void gemm<float>(Trans, Trans, int, int, int, float, const float*, int,
                          const float*, int, float, float*, int);
template void gemm<double>(Trans, Trans, int, int, int, double, const double*, int,
                           const double*, int, double, double*, int);
template void adam_update<float>(std::span<float>, std::span<const float>,
                                 std::span<float>, std::span<float>,
                                 const AdamStep<float>&);
template void adam_update<double>(std::span<double>, std::span<const double>,
                                  std::span<double>, std::span<double>,
                                  const AdamStep<double>&);

template void glu_forward<float>(const float*, const float*, float*, std::size_t);
template void glu_forward<double>(const double*, const double*, double*, std::size_t);
template void glu_backward<float>(const float*, const float*, const float*, float*, float*,
                                  std::size_t);
template void glu_backward<double>(const double*, const double*, const double*, double*,
                                   double*, std::size_t);

}  // namespace maskvc::kernels::scalar
