#include "nirstext/linalg.hpp"

#include <cmath>

#include "nirstext/errors.hpp"
#include "nirstext/kernels.hpp"

namespace nirstext::linalg {

void cholesky_inplace(Mat& A, double rel_tol) {
  if (A.rows != A.cols) throw NumericError("cholesky: matrix not square");
  const std::int64_t n = A.rows;
  double max_diag = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    max_diag = std::max(max_diag, std::fabs(A.at(i, i)));
  const double tol = rel_tol * std::max(max_diag, 1e-300);
  for (std::int64_t j = 0; j < n; ++j) {
    double d = A.at(j, j) - kernels::dot(A.row(j), A.row(j), static_cast<std::size_t>(j));
    if (d <= tol) throw NumericError("cholesky: matrix not positive definite");
    d = std::sqrt(d);
    A.at(j, j) = d;
    const double inv = 1.0 / d;
    for (std::int64_t i = j + 1; i < n; ++i) {
      const double s =
          A.at(i, j) - kernels::dot(A.row(i), A.row(j), static_cast<std::size_t>(j));
      A.at(i, j) = s * inv;
    }
  }
}

Mat cholesky_solve(const Mat& L, const Mat& B) {
  const std::int64_t n = L.rows;
  if (B.rows != n) throw NumericError("cholesky_solve: shape mismatch");
  Mat X = B;
  // forward: L Z = B
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t k = 0; k < i; ++k) {
      const double l = L.at(i, k);
      if (l != 0.0) kernels::axpy(-l, X.row(k), X.row(i), static_cast<std::size_t>(X.cols));
    }
    kernels::scale(1.0 / L.at(i, i), X.row(i), static_cast<std::size_t>(X.cols));
  }
  // backward: L^T X = Z
  for (std::int64_t i = n - 1; i >= 0; --i) {
    for (std::int64_t k = i + 1; k < n; ++k) {
      const double l = L.at(k, i);
      if (l != 0.0) kernels::axpy(-l, X.row(k), X.row(i), static_cast<std::size_t>(X.cols));
    }
    kernels::scale(1.0 / L.at(i, i), X.row(i), static_cast<std::size_t>(X.cols));
  }
  return X;
}

Mat solve_spd(Mat A, const Mat& B) {
  cholesky_inplace(A);
  return cholesky_solve(A, B);
}

Mat spd_inverse(Mat A) {
  Mat I(A.rows, A.rows);
  for (std::int64_t i = 0; i < A.rows; ++i) I.at(i, i) = 1.0;
  return solve_spd(std::move(A), I);
}

Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows) throw NumericError("matmul: inner dims differ");
  Mat C(A.rows, B.cols);
  kernels::gemm_nn(false, static_cast<std::size_t>(A.rows), static_cast<std::size_t>(A.cols),
                   static_cast<std::size_t>(B.cols), A.data(), B.data(), C.data());
  return C;
}

Mat matmul_nt(const Mat& A, const Mat& B) {
  if (A.cols != B.cols) throw NumericError("matmul_nt: inner dims differ");
  Mat C(A.rows, B.rows);
  kernels::gemm_nt(false, static_cast<std::size_t>(A.rows), static_cast<std::size_t>(A.cols),
                   static_cast<std::size_t>(B.rows), A.data(), B.data(), C.data());
  return C;
}

Mat matmul_tn(const Mat& A, const Mat& B) {
  if (A.rows != B.rows) throw NumericError("matmul_tn: inner dims differ");
  Mat C(A.cols, B.cols);
  kernels::gemm_tn(false, static_cast<std::size_t>(A.rows), static_cast<std::size_t>(A.cols),
                   static_cast<std::size_t>(B.cols), A.data(), B.data(), C.data());
  return C;
}

OlsFit ols(const Mat& X, const Mat& Y) {
  if (X.rows != Y.rows) throw NumericError("ols: X and Y row counts differ");
  if (X.rows < X.cols) throw NumericError("ols: fewer rows than columns");
  Mat xtx = matmul_tn(X, X);
  Mat xty = matmul_tn(X, Y);
  try {
    cholesky_inplace(xtx, 1e-10);
  } catch (const NumericError&) {
    throw NumericError("rank-deficient design matrix");
  }
  OlsFit fit;
  fit.beta = cholesky_solve(xtx, xty);
  Mat I(X.cols, X.cols);
  for (std::int64_t i = 0; i < X.cols; ++i) I.at(i, i) = 1.0;
  fit.xtx_inv = cholesky_solve(xtx, I);
  return fit;
}

Mat ridge(const Mat& X, const Mat& Y, double lambda) {
  if (X.rows != Y.rows) throw NumericError("ridge: X and Y row counts differ");
  if (!(lambda > 0.0)) throw NumericError("ridge: lambda must be positive");
  Mat xtx = matmul_tn(X, X);
  for (std::int64_t i = 0; i < xtx.rows; ++i) xtx.at(i, i) += lambda;
  const Mat xty = matmul_tn(X, Y);
  return solve_spd(std::move(xtx), xty);
}

}  // namespace nirstext::linalg
