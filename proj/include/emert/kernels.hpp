// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string_view>

// Dense float64 inner loops used by the tensor kernel. Every routine has a
// scalar reference implementation; vector variants (AVX2+FMA on x86-64, NEON
// on AArch64) are selected once per process at first use.
//
// All matrices are row-major and contiguous. The gemm family accumulates
// into C (C += op(A) * op(B)); callers zero C when they want a plain product.

namespace emert::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // y = x * y (elementwise)
  void (*mul_inplace)(std::size_t n, const double* x, double* y);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table in use. Resolved on first call: EMERT_KERNELS=scalar forces the
// reference path, otherwise the widest supported variant wins.
const KernelTable& active();

// Overrides the active table for the rest of the process. Not thread-safe
// with respect to concurrent kernel calls; intended for tests and the CLI.
void force(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(std::size_t n, const double* x, const double* y) {
  return active().dot(n, x, y);
}
inline void axpy(std::size_t n, double a, const double* x, double* y) {
  active().axpy(n, a, x, y);
}
inline void mul_inplace(std::size_t n, const double* x, double* y) {
  active().mul_inplace(n, x, y);
}
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  active().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  active().gemm_nt(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  active().gemm_tn(m, n, k, a, b, c);
}

}  // namespace emert::kernels
