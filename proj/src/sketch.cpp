#include "asnet/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "asnet/error.hpp"

namespace asnet::sketch {

namespace {

linalg::SvdResult sketch_svd(const Matrix& s) {
  return linalg::thin_svd(s, std::min(s.rows(), s.cols()));
}

Vector padded(const Vector& v, Index n) {
  Vector out = Vector::Zero(n);
  out.head(std::min(n, v.size())) = v.head(std::min(n, v.size()));
  return out;
}

std::size_t cumulative_threshold(const Vector& weights, double target) {
  const double total = weights.sum();
  double run = 0.0;
  for (Index i = 0; i < weights.size(); ++i) {
    run += weights(i);
    if (run >= target * total) return static_cast<std::size_t>(i + 1);
  }
  return static_cast<std::size_t>(weights.size());
}

void check_spectrum(const Vector& values, double epsilon, const char* who) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ShapeError(std::string(who) + ": epsilon must lie in (0, 1)");
  if (values.size() == 0 || !values.allFinite() || values.minCoeff() < 0.0)
    throw ShapeError(std::string(who) + ": spectrum must be finite and nonnegative");
  if (values.maxCoeff() == 0.0) throw NumericError(std::string(who) + ": all-zero spectrum");
}

}  // namespace

FrequentDirections::FrequentDirections(Index dim, Index width, const Matrix& initial)
    : s_(Matrix::Zero(dim, width)) {
  if (dim < 1) throw ShapeError("FrequentDirections: dimension must be positive");
  if (width < 2) throw ShapeError("FrequentDirections: sketch width must be >= 2");
  if (initial.cols() > 0 && initial.rows() != dim)
    throw ShapeError("FrequentDirections: initial gradients have wrong dimension");
  if (initial.cols() > width) throw ShapeError("FrequentDirections: more initial columns than width");
  if (!initial.allFinite()) throw NumericError("FrequentDirections: non-finite initial gradient");
  s_.leftCols(initial.cols()) = initial;
  seen_ = static_cast<std::size_t>(initial.cols());
}

void FrequentDirections::update(const Vector& g) {
  if (g.size() != dim()) throw ShapeError("FrequentDirections::update: gradient has wrong dimension");
  if (!g.allFinite()) throw NumericError("FrequentDirections::update: non-finite gradient");

  const linalg::SvdResult svd = sketch_svd(s_);
  const Index k = svd.sigma.size();
  const double floor_sq = (k == width()) ? svd.sigma(k - 1) * svd.sigma(k - 1) : 0.0;
  Matrix shrunk = Matrix::Zero(dim(), width());
  for (Index j = 0; j < k; ++j) {
    const double s = std::sqrt(std::max(svd.sigma(j) * svd.sigma(j) - floor_sq, 0.0));
    shrunk.col(j) = svd.u.col(j) * s;
  }
  shrunk.col(width() - 1) = g;
  s_ = std::move(shrunk);
  ++seen_;
}

Spectrum FrequentDirections::finalize() const {
  if (seen_ == 0) throw ShapeError("FrequentDirections::finalize: empty sketch");
  linalg::SvdResult svd = sketch_svd(s_);
  return {std::move(svd.u), padded(svd.sigma, width())};
}

std::size_t active_neuron_count(const Vector& sigma, double epsilon) {
  check_spectrum(sigma, epsilon, "active_neuron_count");
  // sqrt(a)/sqrt(b) >= 1-eps  <=>  a/b >= (1-eps)^2
  return cumulative_threshold(sigma.cwiseAbs2(), (1.0 - epsilon) * (1.0 - epsilon));
}

std::size_t active_neuron_count_eigen(const Vector& lambda, double epsilon) {
  check_spectrum(lambda, epsilon, "active_neuron_count_eigen");
  return cumulative_threshold(lambda, 1.0 - epsilon);
}

ActiveSubspace compute_active_subspace(const nn::Network& pre, const nn::Network& post,
                                       const nn::Dataset& data, const SubspaceOptions& opts) {
  if (data.empty()) throw ShapeError("compute_active_subspace: empty dataset");
  if (pre.output_shape() != post.input_shape())
    throw ShapeError("compute_active_subspace: pre-model output does not match post-model input");
  if (opts.samples < static_cast<std::size_t>(opts.width))
    throw ShapeError("compute_active_subspace: sample budget smaller than sketch width");
  if (opts.batch_size == 0) throw ShapeError("compute_active_subspace: batch size must be positive");

  const Index dim = static_cast<Index>(nn::shape_size(post.input_shape()));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(opts.seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), opts.samples));

  std::optional<FrequentDirections> fd;
  Matrix initial(dim, 0);
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t stop = std::min(order.size(), start + opts.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, stop - start);
    const nn::Dataset batch = data.subset(idx);
    const nn::Tensor x = nn::forward(pre, batch.inputs);
    const nn::Tensor g = nn::grad_wrt_activation(post, 0, x, batch.labels);
    const auto rows = g.matrix();
    for (Index i = 0; i < rows.rows(); ++i) {
      if (fd) {
        fd->update(rows.row(i).transpose());
      } else {
        initial.conservativeResize(Eigen::NoChange, initial.cols() + 1);
        initial.col(initial.cols() - 1) = rows.row(i).transpose();
        if (initial.cols() == opts.width) fd.emplace(dim, opts.width, initial);
      }
    }
  }
  if (!fd) fd.emplace(dim, opts.width, initial);

  Spectrum spec = fd->finalize();
  ActiveSubspace out;
  out.sigma = spec.sigma;
  out.layer_index = pre.depth();
  out.epsilon = opts.epsilon;
  if (out.sigma.maxCoeff() > 0.0) {
    out.estimated = active_neuron_count(out.sigma, opts.epsilon);
    out.estimated_eigen = active_neuron_count_eigen(out.sigma.cwiseAbs2(), opts.epsilon);
  }
  std::size_t keep = opts.fixed_rank ? *opts.fixed_rank : std::max<std::size_t>(out.estimated, 1);
  keep = std::min<std::size_t>(keep, static_cast<std::size_t>(spec.v.cols()));
  if (keep == 0) throw ShapeError("compute_active_subspace: requested rank must be positive");
  out.v1 = spec.v.leftCols(static_cast<Index>(keep));
  out.n_active = keep;
  return out;
}

void write_spectrum_csv(std::ostream& out, const std::vector<ActiveSubspace>& spaces, bool header) {
  if (header) out << "layer_index,rank,sigma\n";
  const auto old_precision = out.precision(17);
  for (const auto& s : spaces)
    for (Index i = 0; i < s.sigma.size(); ++i)
      out << s.layer_index << ',' << (i + 1) << ',' << s.sigma(i) << '\n';
  out.precision(old_precision);
}

}  // namespace asnet::sketch
