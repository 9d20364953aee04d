#pragma once

// Dense double-precision kernels behind the autodiff ops.
//
// Each kernel has a scalar reference implementation and an AVX2+FMA variant.
// The variant is picked once at startup from CPUID; DISCO_KERNELS=scalar in
// the environment forces the reference path. The two paths differ only in
// summation order, so results agree to rounding, not bitwise.

#include <cstddef>
#include <span>
#include <string_view>

namespace disco::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
};

const KernelTable& scalar_table();
const KernelTable& avx2_table();

bool backend_available(Backend backend);
Backend active_backend();
/// Throws std::invalid_argument when the backend is not available on this CPU.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

const KernelTable& active();

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sum_squares(std::span<const double> x) { return dot(x, x); }

}  // namespace disco::kernels
