#pragma once

#include <cstdint>

namespace lfsr {

// Row-major C[M x N] = alpha * op(A) * op(B) + beta * C.
// op(A) is [M x K] (lda = K when not transposed, M when transposed).
// Summation order along K is fixed, so results do not depend on the caller's
// threading; parallelism happens above this layer.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
          int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
          int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc);

}  // namespace lfsr
