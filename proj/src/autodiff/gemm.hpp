#pragma once

#include <cblas.h>

namespace smf::ad::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) M x K and op(B) K x N.
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

// float64 is the finite-difference reference path. Plain loops here:
// OpenBLAS 0.3.20 dgemm is wrong for N > 192 on SkylakeX-class kernels.
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<long>(i) * ldc;
    for (int j = 0; j < n; ++j) ci[j] = beta == 0.0 ? 0.0 : beta * ci[j];
    for (int p = 0; p < k; ++p) {
      const double av = alpha * (ta ? a[static_cast<long>(p) * lda + i] : a[static_cast<long>(i) * lda + p]);
      if (tb) {
        for (int j = 0; j < n; ++j) ci[j] += av * b[static_cast<long>(j) * ldb + p];
      } else {
        const double* bp = b + static_cast<long>(p) * ldb;
        for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

}  // namespace smf::ad::detail
