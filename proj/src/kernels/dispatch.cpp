#include <atomic>
#include <cstdlib>
#include <string_view>

#include "maskvc/kernels/kernels.hpp"

namespace maskvc::kernels {
namespace {

Isa widest_supported(Isa cap) {
  for (Isa isa : {Isa::kAvx512, Isa::kAvx2}) {
    if (static_cast<int>(isa) <= static_cast<int>(cap) && isa_supported(isa)) return isa;
  }
  return Isa::kScalar;
}

Isa detect() {
  const char* forced = std::getenv("MASKVC_ISA");
  if (forced != nullptr) {
    const std::string_view f(forced);
    if (f == "scalar") return Isa::kScalar;
    if (f == "avx2") return widest_supported(Isa::kAvx2);
  }
  return widest_supported(Isa::kAvx512);
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
#if defined(__x86_64__) || defined(__i386__)
    case Isa::kAvx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::kAvx512:
      return isa_supported(Isa::kAvx2) && __builtin_cpu_supports("avx512f") &&
             __builtin_cpu_supports("avx512dq") && __builtin_cpu_supports("avx512vl");
#else
    default:
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) { current().store(widest_supported(isa), std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kAvx2:
      return "avx2";
    case Isa::kAvx512:
      return "avx512";
    default:
      return "scalar";
  }
}

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  switch (active_isa()) {
    case Isa::kAvx512:
      avx512::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
      break;
    case Isa::kAvx2:
      avx2::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
      break;
    default:
      scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 const AdamStep<T>& step) {
  if (active_isa() == Isa::kScalar) {
    scalar::adam_update(param, grad, m, v, step);
  } else {
    avx2::adam_update(param, grad, m, v, step);
  }
}

template <typename T>
void glu_forward(const T* a, const T* b, T* out, std::size_t n) {
  if (active_isa() == Isa::kScalar) {
    scalar::glu_forward(a, b, out, n);
  } else {
    avx2::glu_forward(a, b, out, n);
  }
}

template <typename T>
void glu_backward(const T* a, const T* b, const T* g, T* da, T* db, std::size_t n) {
  if (active_isa() == Isa::kScalar) {
    scalar::glu_backward(a, b, g, da, db, n);
  } else {
    avx2::glu_backward(a, b, g, da, db, n);
  }
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

template void glu_forward<float>(const float*, const float*, float*, std::size_t);
template void glu_forward<double>(const double*, const double*, double*, std::size_t);
template void glu_backward<float>(const float*, const float*, const float*, float*, float*,
                                  std::size_t);
template void glu_backward<double>(const double*, const double*, const double*, double*,
                                   double*, std::size_t);

}  // namespace maskvc::kernels
