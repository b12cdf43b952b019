#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the whole numeric stack. Every op has a
// scalar reference implementation and an AVX2+FMA variant; the dispatcher
// picks one at startup based on cpu capabilities. Tests assert the variants
// agree within tolerance, so higher layers can stay oblivious to the ISA.
namespace nirstext::kernels {

double dot(const double* a, const double* b, std::size_t n);

// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);

// x *= a
void scale(double a, double* x, std::size_t n);

double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);

// C[M x N] (+)= A[M x K] * B[K x N], all row-major. accumulate=false zeroes C first.
void gemm_nn(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
             const double* A, const double* B, double* C);

// C[M x N] (+)= A[M x K] * B^T, where B is stored row-major as [N x K].
void gemm_nt(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
             const double* A, const double* B, double* C);

// C[K x N] (+)= A^T * B, where A is [M x K] and B is [M x N], row-major.
void gemm_tn(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
             const double* A, const double* B, double* C);

// Causal convolution: y[t] = sum_{tau < nh, tau <= t} h[tau] * x[t - tau],
// for t in [0, nx). y has length nx.
void conv_causal(const double* x, std::size_t nx, const double* h,
                 std::size_t nh, double* y);

// "avx2" or "scalar".
std::string active_isa();

// "auto", "scalar" or "avx2"; throws if the requested ISA is unavailable.
// Exists for the equivalence tests and for debugging.
void force_isa(const std::string& name);

bool cpu_supports_avx2();

}  // namespace nirstext::kernels

namespace nirstext::kernels::detail {

struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  void (*gemm_nn)(bool, std::size_t, std::size_t, std::size_t, const double*,
                  const double*, double*);
  void (*gemm_nt)(bool, std::size_t, std::size_t, std::size_t, const double*,
                  const double*, double*);
  void (*gemm_tn)(bool, std::size_t, std::size_t, std::size_t, const double*,
                  const double*, double*);
  void (*conv_causal)(const double*, std::size_t, const double*, std::size_t,
                      double*);
};

const Ops& scalar_ops();
const Ops& avx2_ops();

}  // namespace nirstext::kernels::detail
