#pragma once

// Data-parallel inner loops shared by the network engine and the optimizer.
//
// Every kernel has a portable scalar reference in `kernels::scalar` and an
// AVX2/FMA variant in `kernels::avx2`; GEMM also has an AVX-512 variant. The
// unqualified entry points dispatch on an ISA chosen once at startup from
// CPUID (widest supported); `MASKVC_ISA=scalar|avx2|avx512` in the
// environment or set_isa() overrides it.
//
// Matrices are row-major. `op(A)` is A or A^T according to the Trans flag.

#include <cstddef>
#include <span>
#include <string_view>

namespace maskvc::kernels {

enum class Isa { kScalar, kAvx2, kAvx512 };

enum class Trans { kNo, kYes };

bool isa_supported(Isa isa);
Isa active_isa();
// Falls back to the widest supported ISA below `isa`.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

template <typename T>
struct AdamStep {
  T lr;
  T beta1;
  T beta2;
  T eps;
  // 1 - beta^t for the current step t (bias correction).
  T bias1;
  T bias2;
};

// C = alpha * op(A) * op(B) + beta * C, op(A) is m x k, op(B) is k x n.
// When beta == 0, C is write-only (its prior contents are ignored).
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

// In-place Adam update of `param` given gradient `grad` and moments m, v.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m,
                 std::span<T> v, const AdamStep<T>& step);

// Gated linear unit on the split halves a, b of length n:
//   out = a * sigmoid(b)
//   da = g * sigmoid(b), db = g * a * sigmoid(b) * (1 - sigmoid(b))
template <typename T>
void glu_forward(const T* a, const T* b, T* out, std::size_t n);
template <typename T>
void glu_backward(const T* a, const T* b, const T* g, T* da, T* db, std::size_t n);

namespace scalar {
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m,
                 std::span<T> v, const AdamStep<T>& step);
template <typename T>
void glu_forward(const T* a, const T* b, T* out, std::size_t n);
template <typename T>
void glu_backward(const T* a, const T* b, const T* g, T* da, T* db, std::size_t n);
}  // namespace scalar

namespace avx2 {
// Callers must check isa_supported(Isa::kAvx2) first.
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m,
                 std::span<T> v, const AdamStep<T>& step);
// The float GLU uses a polynomial exp (about 2 ulp); double defers to scalar.
template <typename T>
void glu_forward(const T* a, const T* b, T* out, std::size_t n);
template <typename T>
void glu_backward(const T* a, const T* b, const T* g, T* da, T* db, std::size_t n);
}  // namespace avx2

namespace avx512 {
// Callers must check isa_supported(Isa::kAvx512) first. Adam under kAvx512
// and GLU use the AVX2 variants.
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);
}  // namespace avx512

}  // namespace maskvc::kernels
