#pragma once

#include "nirstext/mat.hpp"

namespace nirstext::linalg {

// A = L L^T, lower triangle of A replaced by L (upper left untouched).
// Throws NumericError when a pivot falls below tol * max diagonal, i.e. the
// matrix is not numerically positive definite.
void cholesky_inplace(Mat& A, double rel_tol = 1e-12);

// Solves L L^T X = B given the factor from cholesky_inplace.
Mat cholesky_solve(const Mat& L, const Mat& B);

// Convenience: factor A (SPD) and solve A X = B.
Mat solve_spd(Mat A, const Mat& B);

// A^{-1} for SPD A.
Mat spd_inverse(Mat A);

// C = A * B, C = A * B^T, C = A^T * B on Mat shapes (kernel-backed).
Mat matmul(const Mat& A, const Mat& B);
Mat matmul_nt(const Mat& A, const Mat& B);
Mat matmul_tn(const Mat& A, const Mat& B);

struct OlsFit {
  Mat beta;     // [p x m] coefficients per response column
  Mat xtx_inv;  // [p x p], for coefficient covariances scaled by sigma^2
};

// Ordinary least squares via normal equations with a Cholesky rank check.
// Throws NumericError("rank-deficient design matrix") when X^T X is singular.
OlsFit ols(const Mat& X, const Mat& Y);

// (X^T X + lambda I)^{-1} X^T Y. lambda > 0 keeps this well-posed even when
// n < p, which happens for the cross-participant maps.
Mat ridge(const Mat& X, const Mat& Y, double lambda);

}  // namespace nirstext::linalg
