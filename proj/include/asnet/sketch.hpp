#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "asnet/linalg.hpp"
#include "asnet/net.hpp"

namespace asnet::sketch {

using linalg::Index;
using linalg::Matrix;
using linalg::Vector;

struct Spectrum {
  Matrix v;      // dim x min(dim, width), orthonormal columns
  Vector sigma;  // length width, nonincreasing
};

/// Streaming frequent-directions sketch S (dim x width) of a gradient
/// matrix G whose columns arrive one at a time. S S^T approximates G G^T
/// from below; the covariance itself is never formed.
class FrequentDirections {
 public:
  /// `initial` holds up to `width` starting columns; missing ones are zero.
  FrequentDirections(Index dim, Index width, const Matrix& initial);

  /// SVD of S, shrink S <- U sqrt(max(Sigma^2 - sigma_r^2, 0)), then the new
  /// gradient replaces the (now zero) last column.
  void update(const Vector& g);

  /// Final SVD of the current sketch with canonical signs.
  Spectrum finalize() const;

  const Matrix& matrix() const { return s_; }
  Index dim() const { return s_.rows(); }
  Index width() const { return s_.cols(); }
  std::size_t seen() const { return seen_; }

 private:
  Matrix s_;
  std::size_t seen_ = 0;
};

/// Smallest i with sqrt(sum_{j<=i} sigma_j^2) / sqrt(sum_j sigma_j^2) >= 1 - eps.
std::size_t active_neuron_count(const Vector& sigma, double epsilon);

/// Smallest i with sum_{j<=i} lambda_j / sum_j lambda_j >= 1 - eps.
std::size_t active_neuron_count_eigen(const Vector& lambda, double epsilon);

struct ActiveSubspace {
  Matrix v1;                  // n_l x n_active
  Vector sigma;               // sketch singular values
  std::size_t n_active = 0;   // columns of v1
  std::size_t estimated = 0;  // root-sum-square singular value rule
  std::size_t estimated_eigen = 0;  // eigenvalue-sum rule on sigma^2
  std::size_t layer_index = 0;
  double epsilon = 0.05;
};

struct SubspaceOptions {
  Index width = 50;
  std::size_t samples = 1000;  // m_AS
  double epsilon = 0.05;
  std::optional<std::size_t> fixed_rank;  // forces r' instead of the estimate
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;
};

/// Streams gradients of the post-model loss at x = pre(x0) for a seeded
/// sample of `data` (labels are the dataset labels) through a
/// FrequentDirections sketch.
ActiveSubspace compute_active_subspace(const nn::Network& pre, const nn::Network& post,
                                       const nn::Dataset& data, const SubspaceOptions& opts);

/// CSV rows "layer_index,rank,sigma" (rank is 1-based).
void write_spectrum_csv(std::ostream& out, const std::vector<ActiveSubspace>& spaces,
                        bool header = true);

}  // namespace asnet::sketch
