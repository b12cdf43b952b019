#include <stdexcept>

#include "nirstext/kernels.hpp"

namespace nirstext::kernels {

namespace {

const detail::Ops* g_ops = nullptr;
std::string g_isa;

void select_auto() {
  if (cpu_supports_avx2()) {
    g_ops = &detail::avx2_ops();
    g_isa = "avx2";
  } else {
    g_ops = &detail::scalar_ops();
    g_isa = "scalar";
  }
}

const detail::Ops& ops() {
  if (!g_ops) select_auto();
  return *g_ops;
}

}  // namespace

bool cpu_supports_avx2() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

std::string active_isa() {
  ops();
  return g_isa;
}

void force_isa(const std::string& name) {
  if (name == "auto") {
    select_auto();
  } else if (name == "scalar") {
    g_ops = &detail::scalar_ops();
    g_isa = "scalar";
  } else if (name == "avx2") {
    if (!cpu_supports_avx2())
      throw std::runtime_error("force_isa: avx2 not supported on this cpu");
    g_ops = &detail::avx2_ops();
    g_isa = "avx2";
  } else {
    throw std::invalid_argument("force_isa: unknown isa '" + name + "'");
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  return ops().dot(a, b, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  ops().axpy(a, x, y, n);
}
void scale(double a, double* x, std::size_t n) { ops().scale(a, x, n); }
double sum(const double* x, std::size_t n) { return ops().sum(x, n); }
double sumsq(const double* x, std::size_t n) { return ops().sumsq(x, n); }
void gemm_nn(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
             const double* A, const double* B, double* C) {
  ops().gemm_nn(accumulate, M, K, N, A, B, C);
}
void gemm_nt(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
             const double* A, const double* B, double* C) {
  ops().gemm_nt(accumulate, M, K, N, A, B, C);
}
void gemm_tn(bool accumulate, std::size_t M, std::size_t K, std::size_t N,
             const double* A, const double* B, double* C) {
  ops().gemm_tn(accumulate, M, K, N, A, B, C);
}
void conv_causal(const double* x, std::size_t nx, const double* h,
                 std::size_t nh, double* y) {
  ops().conv_causal(x, nx, h, nh, y);
}

}  // namespace nirstext::kernels
