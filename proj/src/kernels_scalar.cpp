#include <cstring>

#include "nirstext/kernels.hpp"

namespace nirstext::kernels::detail {

namespace {

double dot_s(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_s(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_s(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum_s(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq_s(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

// Row-update order: C's row i stays hot while B is streamed row by row.
void gemm_nn_s(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
               const double* A, const double* B, double* C) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    const double* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[k];
      if (aik == 0.0) continue;
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

void gemm_nt_s(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
               const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::size_t j = 0; j < N; ++j) {
      const double d = dot_s(a, B + j * K, K);
      c[j] = accumulate ? c[j] + d : d;
    }
  }
}

void gemm_tn_s(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
               const double* A, const double* B, double* C) {
  if (!accumulate) std::memset(C, 0, K * N * sizeof(double));
  for (std::size_t m = 0; m < M; ++m) {
    const double* a = A + m * K;
    const double* b = B + m * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double amk = a[k];
      if (amk == 0.0) continue;
      double* c = C + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += amk * b[j];
    }
  }
}

void conv_causal_s(const double* x, std::size_t nx, const double* h,
                   std::size_t nh, double* y) {
  for (std::size_t t = 0; t < nx; ++t) {
    const std::size_t kmax = (t + 1 < nh) ? t + 1 : nh;
    double acc = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) acc += h[k] * x[t - k];
    y[t] = acc;
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{dot_s,     axpy_s,    scale_s,  sum_s,        sumsq_s,
                       gemm_nn_s, gemm_nt_s, gemm_tn_s, conv_causal_s};
  return ops;
}

}  // namespace nirstext::kernels::detail
