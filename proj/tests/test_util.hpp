#pragma once

// Shared test-only oracles: finite differences, a cyclic Jacobi
// eigensolver, and small seeded networks covering every layer kind.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "asnet/linalg.hpp"
#include "asnet/net.hpp"
#include "asnet/pce.hpp"

namespace testutil {

using asnet::linalg::Matrix;
using asnet::linalg::Vector;
namespace nn = asnet::nn;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix; eigenvalues
/// returned in nonincreasing order with matching eigenvector columns.
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix a) {
  const Eigen::Index n = a.rows();
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
  Vector vals(n);
  Matrix vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    vecs.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return {vals, vecs};
}

/// Spectral norm of a symmetric matrix via the Jacobi oracle.
inline double sym_spectral_norm(const Matrix& a) {
  const auto [vals, vecs] = jacobi_eigen(a);
  return std::max(std::abs(vals(0)), std::abs(vals(vals.size() - 1)));
}

inline double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline void randomize_parameters(nn::Network& net, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (auto p : net.parameters())
    for (double& v : p) v = normal(rng);
}

enum class NetKind { dense, relu, conv, maxpool, flatten };

inline const char* kind_name(NetKind k) {
  switch (k) {
    case NetKind::dense: return "dense";
    case NetKind::relu: return "relu";
    case NetKind::conv: return "conv2d";
    case NetKind::maxpool: return "maxpool2d";
    case NetKind::flatten: return "flatten";
  }
  return "?";
}

/// Small network exercising one layer kind, seeded parameters.
inline nn::Network small_network(NetKind kind, std::uint64_t seed) {
  std::vector<nn::Layer> layers;
  nn::Shape input;
  switch (kind) {
    case NetKind::dense:
      input = {5};
      layers = {nn::Dense(5, 4), nn::Dense(4, 3)};
      break;
    case NetKind::relu:
      input = {5};
      layers = {nn::Dense(5, 6), nn::ReLU{}, nn::Dense(6, 3)};
      break;
    case NetKind::conv:
      input = {2, 5, 5};
      layers = {nn::Conv2d(2, 3, 3, 1, 1), nn::Conv2d(3, 2, 2, 2, 0), nn::Flatten{}, nn::Dense(8, 3)};
      break;
    case NetKind::maxpool:
      input = {1, 6, 6};
      layers = {nn::Conv2d(1, 2, 3), nn::ReLU{}, nn::MaxPool2d{2}, nn::Flatten{}, nn::Dense(8, 3)};
      break;
    case NetKind::flatten:
      input = {2, 3, 2};
      layers = {nn::Flatten{}, nn::Dense(12, 3)};
      break;
  }
  nn::Network net(input, std::move(layers));
  randomize_parameters(net, seed);
  return net;
}

inline nn::Tensor random_input(const nn::Shape& sample, std::size_t batch, std::uint64_t seed) {
  std::vector<std::size_t> dims{batch};
  dims.insert(dims.end(), sample.begin(), sample.end());
  return nn::Tensor(dims, random_values(nn::shape_size(dims), seed));
}

inline double total_loss(const nn::Network& net, std::size_t first_layer, const nn::Tensor& x,
                         const std::vector<std::size_t>& labels) {
  nn::Tensor cur = x;
  std::vector<nn::Layer> tail(net.layers().begin() + static_cast<long>(first_layer), net.layers().end());
  const nn::Network post(net.activation_shape(first_layer), tail);
  const nn::Tensor logits = nn::forward(post, cur);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += nn::cross_entropy(logits.sample(i), labels[i]);
  return s;
}

/// Max relative error of grad_wrt_activation against central differences.
inline double activation_grad_error(const nn::Network& net, std::size_t layer, const nn::Tensor& x,
                                    const std::vector<std::size_t>& labels, double h = 1e-5) {
  const nn::Tensor g = nn::grad_wrt_activation(net, layer, x, labels);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    nn::Tensor xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (total_loss(net, layer, xp, labels) - total_loss(net, layer, xm, labels)) / (2 * h);
    worst = std::max(worst, rel_err(g.data[i], fd));
  }
  return worst;
}

/// Max relative error of grad_wrt_params against central differences.
inline double param_grad_error(nn::Network net, const nn::Dataset& batch, double h = 1e-5) {
  const nn::ParamGradients pg = nn::grad_wrt_params(net, batch);
  auto mean_loss = [&](const nn::Network& n) {
    const nn::Tensor logits = nn::forward(n, batch.inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) s += nn::cross_entropy(logits.sample(i), batch.labels[i]);
    return s / static_cast<double>(batch.size());
  };
  double worst = 0.0;
  auto params = net.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].size(); ++j) {
      const double keep = params[t][j];
      params[t][j] = keep + h;
      const double up = mean_loss(net);
      params[t][j] = keep - h;
      const double down = mean_loss(net);
      params[t][j] = keep;
      worst = std::max(worst, rel_err(pg.grads[t](static_cast<Eigen::Index>(j)), (up - down) / (2 * h)));
    }
  }
  return worst;
}

/// Random PCE model with coefficients ~ N(0,1) and random standardization.
inline asnet::pce::PceModel random_pce(std::size_t dim, std::size_t order, std::size_t outputs,
                                       std::uint64_t seed) {
  auto set = asnet::pce::multi_indices(dim, order);
  Matrix coeffs = random_matrix(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(outputs), seed);
  Vector mean = random_matrix(static_cast<Eigen::Index>(dim), 1, seed + 1).col(0);
  Vector sd = (random_matrix(static_cast<Eigen::Index>(dim), 1, seed + 2).col(0).array().abs() + 0.5).matrix();
  return asnet::pce::PceModel::make(std::move(set), std::move(coeffs), std::move(mean), std::move(sd));
}

/// Max relative error of pce_backward (z and coefficient gradients) against
/// central differences of <upstream, predict(z)>.
inline double pce_grad_error(const asnet::pce::PceModel& model, const std::vector<double>& z,
                             const Vector& upstream, double h = 1e-5) {
  const auto g = asnet::pce::pce_backward(model, z, upstream);
  auto objective = [&](const asnet::pce::PceModel& m, const std::vector<double>& zz) {
    return upstream.dot(asnet::pce::predict(m, zz));
  };
  double worst = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    worst = std::max(worst, rel_err(g.dz(static_cast<Eigen::Index>(j)),
                                    (objective(model, zp) - objective(model, zm)) / (2 * h)));
  }
  auto m = model;
  for (Eigen::Index i = 0; i < m.coeffs.size(); ++i) {
    const double keep = m.coeffs.data()[i];
    m.coeffs.data()[i] = keep + h;
    const double up = objective(m, z);
    m.coeffs.data()[i] = keep - h;
    const double down = objective(m, z);
    m.coeffs.data()[i] = keep;
    worst = std::max(worst, rel_err(g.dcoeffs.data()[i], (up - down) / (2 * h)));
  }
  return worst;
}

/// Gauss-Hermite nodes and weights for the standard normal weight
/// (probabilists' convention), via Golub-Welsch on the Jacobi oracle.
inline std::pair<Vector, Vector> gauss_hermite(int n) {
  Matrix j = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k - 1, k) = j(k, k - 1) = std::sqrt(static_cast<double>(k));
  auto [vals, vecs] = jacobi_eigen(j);
  Vector w(n);
  for (int k = 0; k < n; ++k) w(k) = vecs(0, k) * vecs(0, k);
  return {vals, w};
}

}  // namespace testutil
