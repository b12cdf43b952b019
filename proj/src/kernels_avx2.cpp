#include <immintrin.h>

#include <cstring>

#include "nirstext/kernels.hpp"

namespace nirstext::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_v(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_v(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_v(double a, double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

double sum_v(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sumsq_v(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(xv, xv, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

// Two broadcast rows of A per pass keep one load of B's row feeding two
// FMA chains; C rows stay in L1 for the sizes this project uses.
void gemm_nn_v(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
               const double* A, const double* B, double* C) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  std::size_t i = 0;
  for (; i + 2 <= M; i += 2) {
    const double* a0 = A + i * K;
    const double* a1 = a0 + K;
    double* c0 = C + i * N;
    double* c1 = c0 + N;
    for (std::size_t k = 0; k < K; ++k) {
      const double* b = B + k * N;
      const __m256d av0 = _mm256_set1_pd(a0[k]);
      const __m256d av1 = _mm256_set1_pd(a1[k]);
      std::size_t j = 0;
      for (; j + 4 <= N; j += 4) {
        const __m256d bv = _mm256_loadu_pd(b + j);
        _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(av0, bv, _mm256_loadu_pd(c0 + j)));
        _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(av1, bv, _mm256_loadu_pd(c1 + j)));
      }
      for (; j < N; ++j) {
        c0[j] += a0[k] * b[j];
        c1[j] += a1[k] * b[j];
      }
    }
  }
  for (; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[k];
      if (aik == 0.0) continue;
      axpy_v(aik, B + k * N, c, N);
    }
  }
}

void gemm_nt_v(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
               const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::size_t j = 0; j < N; ++j) {
      const double d = dot_v(a, B + j * K, K);
      c[j] = accumulate ? c[j] + d : d;
    }
  }
}

void gemm_tn_v(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
               const double* A, const double* B, double* C) {
  if (!accumulate) std::memset(C, 0, K * N * sizeof(double));
  for (std::size_t m = 0; m < M; ++m) {
    const double* a = A + m * K;
    const double* b = B + m * N;
    for (std::size_t k = 0; k < K; ++k) {
      if (a[k] == 0.0) continue;
      axpy_v(a[k], b, C + k * N, N);
    }
  }
}

void conv_causal_v(const double* x, std::size_t nx, const double* h,
                   std::size_t nh, double* y) {
  std::memset(y, 0, nx * sizeof(double));
  const std::size_t taps = nh < nx ? nh : nx;
  for (std::size_t k = 0; k < taps; ++k) {
    if (h[k] == 0.0) continue;
    axpy_v(h[k], x, y + k, nx - k);
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{dot_v,     axpy_v,    scale_v,  sum_v,        sumsq_v,
                       gemm_nn_v, gemm_nt_v, gemm_tn_v, conv_causal_v};
  return ops;
}

}  // namespace nirstext::kernels::detail
