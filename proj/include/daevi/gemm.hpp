#pragma once

namespace daevi {

// Row-major C[m×n] = alpha·op(A)[m×k]·op(B)[k×n] + beta·C. Backed by cblas
// when built with DAEVI_USE_CBLAS, otherwise by a deterministic loop kernel.
// Every element of C is produced by a single fixed-order k-sum, so results
// are bit-identical across runs of one build.
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

} // namespace daevi
