#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asnet/linalg.hpp"

namespace asnet::pce {

using linalg::Matrix;
using linalg::Vector;

/// All multi-indices alpha in N^dim with |alpha| <= order, graded
/// lexicographic: total degree nondecreasing, lexicographic within a degree.
struct MultiIndexSet {
  std::size_t dim = 0;
  std::size_t order = 0;
  std::vector<std::vector<unsigned>> indices;
  /// Nonzero (coordinate, degree) pairs of each index.
  std::vector<std::vector<std::pair<unsigned, unsigned>>> terms;

  std::size_t size() const { return indices.size(); }
};

/// C(dim + order, order); throws ShapeError on overflow.
std::size_t basis_size(std::size_t dim, std::size_t order);

MultiIndexSet multi_indices(std::size_t dim, std::size_t order);

/// Orthonormal probabilists' Hermite values He_k(z) / sqrt(k!), k = 0..p.
Vector hermite_eval(std::size_t p, double z);

/// Derivatives of hermite_eval: d/dz He_k(z)/sqrt(k!) = sqrt(k) * (He_{k-1}(z)/sqrt((k-1)!)).
Vector hermite_derivative(std::size_t p, double z);

/// Tensor-product basis Phi_alpha(z) = prod_j He_{alpha_j}(z_j) (normalized).
Vector basis_eval(const MultiIndexSet& set, std::span<const double> z);

/// Basis rows for every row of z (m x dim -> m x size()).
Matrix basis_matrix(const MultiIndexSet& set, const Matrix& z);

struct PceModel {
  MultiIndexSet index_set;
  Matrix coeffs;  // n_basis x n_out
  Vector mean;    // input standardization
  Vector stddev;

  std::size_t dim() const { return index_set.dim; }
  std::size_t order() const { return index_set.order; }
  std::size_t outputs() const { return static_cast<std::size_t>(coeffs.cols()); }

  /// Assembles a model and checks the invariants (finite coefficients,
  /// positive stddev, consistent sizes).
  static PceModel make(MultiIndexSet set, Matrix coeffs, Vector mean, Vector stddev);
};

struct FitReport {
  double residual = 0.0;  // (1/m) sum_j ||y_j - psi(z_j)||^2 at the fitted coefficients
  std::size_t samples = 0;
  std::size_t basis = 0;
  std::vector<std::string> warnings;
};

struct FitResult {
  PceModel model;
  FitReport report;
};

/// Standardizes z column-wise (population statistics), then solves the
/// ridge least-squares problem for the coefficients.
FitResult fit(const Matrix& z, const Matrix& y, std::size_t order, double ridge = 1e-10);

Matrix standardize(const PceModel& model, const Matrix& z);

Vector predict(const PceModel& model, std::span<const double> z);
/// Row-wise prediction, m x dim -> m x n_out.
Matrix predict(const PceModel& model, const Matrix& z);

struct PceGradient {
  Vector dz;        // dim
  Matrix dcoeffs;   // n_basis x n_out
};

/// Exact derivative of <upstream, predict(model, z)> w.r.t. z and coeffs.
PceGradient pce_backward(const PceModel& model, std::span<const double> z, const Vector& upstream);

struct PceBatchGradient {
  Matrix dz;       // m x dim
  Matrix dcoeffs;  // n_basis x n_out, summed over rows
};

/// Batched pce_backward; `upstream` is m x n_out.
PceBatchGradient pce_backward(const PceModel& model, const Matrix& z, const Matrix& upstream);

}  // namespace asnet::pce
