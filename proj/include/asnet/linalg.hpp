#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace asnet::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thin factorization A ~= U * diag(sigma) * Vt.
///
/// Singular values are nonincreasing. Each column of U has its
/// largest-magnitude entry nonnegative (first such entry on ties) and the
/// matching row of Vt is flipped with it, so results are reproducible.
struct SvdResult {
  Matrix u;
  Vector sigma;
  Matrix vt;
};

struct EigResult {
  Matrix vectors;  // columns, same sign convention as SvdResult::u
  Vector values;   // nonincreasing, clamped at zero
};

/// Rank-k SVD. Uses a Gaussian range finder with `oversample` extra columns
/// and `power_iters` subspace iterations; falls back to a dense SVD when the
/// sketch would cover the full rank anyway. Deterministic for a fixed seed.
SvdResult thin_svd(const Matrix& a, Index k, Index oversample = 10,
                   Index power_iters = 2, std::uint64_t seed = 0);

/// Leading k eigenpairs of a symmetric positive semidefinite matrix.
EigResult eig_psd(const Matrix& c, Index k);

/// argmin_X (1/m)||Phi X - Y||_F^2 + ridge ||X||_F^2.
///
/// Column-pivoted QR of the ridge-augmented system when m >= n; regularized
/// normal equations (ridge floored at 1e-10) otherwise.
Matrix lstsq(const Matrix& phi, const Matrix& y, double ridge);

bool all_finite(const Matrix& a);

/// Flips columns of `vecs` so the largest-magnitude entry of each is
/// nonnegative. When `rows` is non-null the matching rows are flipped too.
void canonicalize_signs(Matrix& vecs, Matrix* rows = nullptr);

/// Max-abs entry of U^T U - I.
double orthonormality_error(const Matrix& u);

}  // namespace asnet::linalg
