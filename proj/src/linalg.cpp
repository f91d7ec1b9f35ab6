#include "asnet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "asnet/error.hpp"

namespace asnet::linalg {

namespace {

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

template <class Solver>
SvdResult take_leading(const Solver& svd, Index k) {
  SvdResult out;
  out.u = svd.matrixU().leftCols(k);
  out.sigma = svd.singularValues().head(k);
  out.vt = svd.matrixV().leftCols(k).transpose();
  return out;
}

// Divide and conquer can return NaN on finite, numerically rank-deficient
// input; one-sided Jacobi is the fallback.
SvdResult dense_svd(const Matrix& a, Index k) {
  SvdResult out = take_leading(Eigen::BDCSVD<Matrix>(a, Eigen::ComputeThinU | Eigen::ComputeThinV), k);
  if (out.u.allFinite() && out.sigma.allFinite() && out.vt.allFinite()) return out;
  out = take_leading(Eigen::JacobiSVD<Matrix>(a, Eigen::ComputeThinU | Eigen::ComputeThinV), k);
  if (!out.u.allFinite() || !out.sigma.allFinite() || !out.vt.allFinite())
    throw NumericError("thin_svd: decomposition did not converge");
  return out;
}

}  // namespace

bool all_finite(const Matrix& a) { return a.allFinite(); }

void canonicalize_signs(Matrix& vecs, Matrix* rows) {
  for (Index j = 0; j < vecs.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < vecs.rows(); ++i) {
      const double v = std::abs(vecs(i, j));
      if (v > best_abs) {
        best_abs = v;
        best = i;
      }
    }
    if (vecs.rows() > 0 && vecs(best, j) < 0.0) {
      vecs.col(j) *= -1.0;
      if (rows != nullptr) rows->row(j) *= -1.0;
    }
  }
}

double orthonormality_error(const Matrix& u) {
  const Matrix gram = u.transpose() * u;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

SvdResult thin_svd(const Matrix& a, Index k, Index oversample, Index power_iters,
                   std::uint64_t seed) {
  const Index full = std::min(a.rows(), a.cols());
  if (k < 1 || k > full) {
    throw ShapeError("thin_svd: rank " + std::to_string(k) + " outside [1, " +
                     std::to_string(full) + "]");
  }
  if (!a.allFinite()) throw NumericError("thin_svd: non-finite input");

  const Index sketch = std::min(k + std::max<Index>(oversample, 0), full);
  SvdResult out;
  if (sketch >= full) {
    out = dense_svd(a, k);
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix omega(a.cols(), sketch);
    for (Index j = 0; j < omega.cols(); ++j)
      for (Index i = 0; i < omega.rows(); ++i) omega(i, j) = normal(rng);

    Matrix q = orthonormal_basis(a * omega);
    for (Index it = 0; it < power_iters; ++it) {
      const Matrix w = orthonormal_basis(a.transpose() * q);
      q = orthonormal_basis(a * w);
    }
    const Matrix b = q.transpose() * a;
    SvdResult small = dense_svd(b, k);
    out.u = q * small.u;
    out.sigma = std::move(small.sigma);
    out.vt = std::move(small.vt);
  }
  canonicalize_signs(out.u, &out.vt);
  return out;
}

EigResult eig_psd(const Matrix& c, Index k) {
  if (c.rows() != c.cols()) throw ShapeError("eig_psd: matrix is not square");
  if (k < 1 || k > c.rows()) throw ShapeError("eig_psd: k out of range");
  if (!c.allFinite()) throw NumericError("eig_psd: non-finite input");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ShapeError("eig_psd: matrix is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(c);
  if (solver.info() != Eigen::Success) throw NumericError("eig_psd: eigensolver failed");

  // Eigen returns ascending order.
  const Index n = c.rows();
  EigResult out;
  out.vectors.resize(n, k);
  out.values.resize(k);
  for (Index j = 0; j < k; ++j) {
    out.values(j) = std::max(0.0, solver.eigenvalues()(n - 1 - j));
    out.vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  canonicalize_signs(out.vectors);
  return out;
}

Matrix lstsq(const Matrix& phi, const Matrix& y, double ridge) {
  const Index m = phi.rows();
  const Index n = phi.cols();
  if (m < 1) throw ShapeError("lstsq: empty design matrix");
  if (y.rows() != m) throw ShapeError("lstsq: design and target row counts differ");
  if (ridge < 0.0) throw ShapeError("lstsq: negative ridge");
  if (!phi.allFinite() || !y.allFinite()) throw NumericError("lstsq: non-finite input");

  if (m >= n) {
    if (ridge == 0.0) return phi.colPivHouseholderQr().solve(y);
    Matrix aug(m + n, n);
    aug.topRows(m) = phi;
    aug.bottomRows(n) = std::sqrt(static_cast<double>(m) * ridge) * Matrix::Identity(n, n);
    Matrix rhs = Matrix::Zero(m + n, y.cols());
    rhs.topRows(m) = y;
    return aug.colPivHouseholderQr().solve(rhs);
  }

  const double lam = static_cast<double>(m) * std::max(ridge, 1e-10);
  Matrix normal = phi.transpose() * phi;
  normal.diagonal().array() += lam;
  return normal.ldlt().solve(phi.transpose() * y);
}

}  // namespace asnet::linalg
