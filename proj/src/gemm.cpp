#include "daevi/gemm.hpp"

#ifdef DAEVI_USE_CBLAS
#include <cblas.h>
#endif

namespace daevi {

#ifdef DAEVI_USE_CBLAS

extern "C" void openblas_set_num_threads(int);

namespace {

// The model's GEMMs are small; one thread avoids fork/join overhead and
// keeps the summation schedule trivially fixed.
struct BlasThreadPin {
    BlasThreadPin() { openblas_set_num_threads(1); }
};
const BlasThreadPin pin_once;

} // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k,
                alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k,
                alpha, a, lda, b, ldb, beta, c, ldc);
}

#else

namespace {

template <typename T>
void gemm_loops(bool trans_a, bool trans_b, int m, int n, int k,
                T alpha, const T* a, int lda, const T* b, int ldb,
                T beta, T* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<long>(i) * ldc;
        if (beta == T(0)) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        } else if (beta != T(1)) {
            for (int j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (int p = 0; p < k; ++p) {
            const T av = alpha * (trans_a ? a[static_cast<long>(p) * lda + i]
                                          : a[static_cast<long>(i) * lda + p]);
            if (!trans_b) {
                const T* brow = b + static_cast<long>(p) * ldb;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<long>(j) * ldb + p];
            }
        }
    }
}

} // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
    gemm_loops(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
    gemm_loops(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#endif

} // namespace daevi
