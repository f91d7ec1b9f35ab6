#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "asnet/linalg.hpp"

namespace asnet::nn {

using linalg::Matrix;
using linalg::Vector;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-sample dimensions, e.g. {D} or {C, H, W}.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);

/// Batched dense array. shape[0] is the batch dimension; the rest is the
/// per-sample shape. Data is row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  /// Wraps a single sample as a batch of one.
  static Tensor single(const Shape& sample_shape, std::vector<double> values);

  std::size_t batch() const { return shape.empty() ? 0 : shape.front(); }
  std::size_t sample_size() const;
  Shape sample_shape() const { return Shape(shape.begin() + (shape.empty() ? 0 : 1), shape.end()); }
  std::span<const double> sample(std::size_t i) const;
  std::span<double> sample(std::size_t i);

  /// Batch x features view of the data.
  Eigen::Map<const RowMatrix> matrix() const;
  Eigen::Map<RowMatrix> matrix();
};

struct Dense {
  RowMatrix weight;  // out x in
  Vector bias;    // out

  Dense() = default;
  Dense(std::size_t in, std::size_t out) : weight(RowMatrix::Zero(out, in)), bias(Vector::Zero(out)) {}
  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
};

struct Conv2d {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  RowMatrix weight;  // out_ch x (in_ch * kernel * kernel), (c, ky, kx) ordering
  Vector bias;    // out_ch

  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
         std::size_t stride_ = 1, std::size_t padding_ = 0);
};

struct ReLU {};

/// Non-overlapping pooling window (stride == kernel), trailing rows/cols dropped.
struct MaxPool2d {
  std::size_t kernel = 2;
};

struct Flatten {};

using Layer = std::variant<Dense, Conv2d, ReLU, MaxPool2d, Flatten>;

const char* layer_name(const Layer& layer);
bool has_parameters(const Layer& layer);

/// Output sample shape of `layer` given its input sample shape.
/// Throws ShapeError when the layer cannot consume `in`.
Shape output_shape(const Layer& layer, const Shape& in);

class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  /// Mutable access for setting weights; the layer kind and shapes must not change.
  Layer& layer(std::size_t i) { return layers_.at(i); }

  /// Sample shape of activation l; activation 0 is the input.
  const Shape& activation_shape(std::size_t l) const { return shapes_.at(l); }
  const Shape& output_shape() const { return shapes_.back(); }
  std::size_t num_outputs() const { return shape_size(shapes_.back()); }

  /// Parameter tensors in layer order, weight before bias.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
void initialize(Network& net, std::uint64_t seed);

/// Dense/ReLU stack: widths {in, h1, ..., out}; no ReLU after the last layer.
Network mlp(const std::vector<std::size_t>& widths, std::uint64_t seed);

/// Concatenation of two networks whose shapes compose.
Network concat(const Network& pre, const Network& post);

/// pre = layers [0, l), post = layers [l, L). Requires 1 <= l < L.
std::pair<Network, Network> split(const Network& net, std::size_t l);

Tensor forward(const Network& net, const Tensor& x);

/// activations[0] = x, activations[l] = output of layer l-1; size depth()+1.
std::vector<Tensor> forward_all(const Network& net, const Tensor& x);

struct BackwardResult {
  Tensor input_grad;
  std::vector<Vector> param_grads;  // aligned with Network::parameters()
};

/// Reverse pass given all activations and dLoss/dOutput. ReLU uses
/// subgradient 0 at 0; max-pool ties route to the first maximal element.
BackwardResult backward(const Network& net, const std::vector<Tensor>& activations,
                        const Tensor& output_grad, bool want_param_grads = true);

/// -log softmax(logits)[label], computed with max subtraction.
double cross_entropy(std::span<const double> logits, std::size_t label);

std::vector<double> softmax(std::span<const double> logits);

struct LossGrad {
  double loss_sum = 0.0;
  Tensor grad;  // d(sum of per-sample losses)/d logits
};

LossGrad softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Per-sample gradient of cross_entropy(post-model(x_l), label) with respect
/// to x_l, where the post-model is layers [l, L) of `net`. Row i of the
/// result belongs to sample i.
Tensor grad_wrt_activation(const Network& net, std::size_t l, const Tensor& x_l,
                           std::span<const std::size_t> labels);

struct Dataset {
  Tensor inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  Dataset() = default;
  Dataset(Tensor x, std::vector<std::size_t> y, std::size_t classes);

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct ParamGradients {
  double loss = 0.0;  // mean cross entropy
  std::vector<Vector> grads;
};

/// Mean cross-entropy gradient over the batch.
ParamGradients grad_wrt_params(const Network& net, const Dataset& batch);

/// Seeded shuffle cut into consecutive slices (last slice may be short).
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);
std::vector<std::size_t> predict(const Network& net, const Tensor& x);

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::vector<std::span<double>> params, const std::vector<Vector>& grads) const;
  /// One learning rate per parameter tensor.
  void step(std::vector<std::span<double>> params, const std::vector<Vector>& grads,
            std::span<const double> lrs) const;

 private:
  double lr_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<std::span<double>> params, const std::vector<Vector>& grads);
  void step(std::vector<std::span<double>> params, const std::vector<Vector>& grads,
            std::span<const double> lrs);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Vector> m_, v_;
};

struct FitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Plain supervised training with Adam. Returns mean training loss per epoch.
std::vector<double> fit(Network& net, const Dataset& data, const FitOptions& opts);

std::size_t count_params(const Network& net);
std::size_t count_flops(const Network& net);
std::size_t count_flops(const Network& net, const Shape& input_shape);

}  // namespace asnet::nn
