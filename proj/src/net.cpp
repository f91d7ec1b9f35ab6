#include "asnet/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>

#include "asnet/error.hpp"

namespace asnet::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

struct ConvGeometry {
  std::size_t channels, height, width, out_h, out_w;
};

ConvGeometry conv_geometry(const Conv2d& c, const Shape& in) {
  if (in.size() != 3 || in[0] != c.in_ch) {
    throw ShapeError("Conv2d expects (" + std::to_string(c.in_ch) + ",H,W) input, got " +
                     shape_str(in));
  }
  const std::size_t h = in[1] + 2 * c.padding;
  const std::size_t w = in[2] + 2 * c.padding;
  if (h < c.kernel || w < c.kernel) throw ShapeError("Conv2d kernel larger than padded input");
  return {in[0], in[1], in[2], (h - c.kernel) / c.stride + 1, (w - c.kernel) / c.stride + 1};
}

// Unfolds one (C,H,W) sample into a (C*k*k) x (out_h*out_w) matrix.
RowMatrix im2col(const Conv2d& c, const ConvGeometry& g, std::span<const double> x) {
  const std::size_t k = c.kernel;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(g.channels * k * k),
                                   static_cast<Eigen::Index>(g.out_h * g.out_w));
  for (std::size_t ch = 0; ch < g.channels; ++ch)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const auto row = static_cast<Eigen::Index>((ch * k + ky) * k + kx);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * c.stride + ky) - static_cast<long>(c.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * c.stride + kx) - static_cast<long>(c.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            cols(row, static_cast<Eigen::Index>(oy * g.out_w + ox)) =
                x[(ch * g.height + static_cast<std::size_t>(iy)) * g.width +
                  static_cast<std::size_t>(ix)];
          }
        }
      }
  return cols;
}

void col2im_add(const Conv2d& c, const ConvGeometry& g, const RowMatrix& cols,
                std::span<double> dx) {
  const std::size_t k = c.kernel;
  for (std::size_t ch = 0; ch < g.channels; ++ch)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const auto row = static_cast<Eigen::Index>((ch * k + ky) * k + kx);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * c.stride + ky) - static_cast<long>(c.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * c.stride + kx) - static_cast<long>(c.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            dx[(ch * g.height + static_cast<std::size_t>(iy)) * g.width +
               static_cast<std::size_t>(ix)] +=
                cols(row, static_cast<Eigen::Index>(oy * g.out_w + ox));
          }
        }
      }
}

std::vector<std::size_t> batched(std::size_t n, const Shape& s) {
  std::vector<std::size_t> dims{n};
  dims.insert(dims.end(), s.begin(), s.end());
  return dims;
}

Tensor layer_forward(const Layer& layer, const Tensor& x) {
  const Shape in = x.sample_shape();
  const Shape out_shape = output_shape(layer, in);
  const std::size_t n = x.batch();
  Tensor y(batched(n, out_shape));

  std::visit(
      Overloaded{
          [&](const Dense& d) {
            auto out = y.matrix();
            out.noalias() = x.matrix() * d.weight.transpose();
            out.rowwise() += d.bias.transpose();
          },
          [&](const Conv2d& c) {
            const ConvGeometry g = conv_geometry(c, in);
            const auto spatial = static_cast<Eigen::Index>(g.out_h * g.out_w);
            for (std::size_t i = 0; i < n; ++i) {
              const RowMatrix cols = im2col(c, g, x.sample(i));
              Eigen::Map<RowMatrix> out(y.sample(i).data(), static_cast<Eigen::Index>(c.out_ch),
                                        spatial);
              out.noalias() = c.weight * cols;
              out.colwise() += c.bias;
            }
          },
          [&](const ReLU&) {
            std::transform(x.data.begin(), x.data.end(), y.data.begin(),
                           [](double v) { return v < 0.0 ? 0.0 : v; });
          },
          [&](const MaxPool2d& p) {
            const std::size_t ch = in[0], h = in[1], w = in[2];
            const std::size_t oh = out_shape[1], ow = out_shape[2];
            for (std::size_t i = 0; i < n; ++i) {
              auto src = x.sample(i);
              auto dst = y.sample(i);
              for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t oy = 0; oy < oh; ++oy)
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::size_t ky = 0; ky < p.kernel; ++ky)
                      for (std::size_t kx = 0; kx < p.kernel; ++kx)
                        best = std::max(
                            best, src[(c * h + oy * p.kernel + ky) * w + ox * p.kernel + kx]);
                    dst[(c * oh + oy) * ow + ox] = best;
                  }
            }
          },
          [&](const Flatten&) { y.data = x.data; },
      },
      layer);
  return y;
}

// Returns dL/dx and accumulates parameter gradients into `grads` (may be null).
Tensor layer_backward(const Layer& layer, const Tensor& x, const Tensor& dy,
                      std::vector<Vector>* grads) {
  const Shape in = x.sample_shape();
  const std::size_t n = x.batch();
  Tensor dx(x.shape);

  std::visit(
      Overloaded{
          [&](const Dense& d) {
            dx.matrix().noalias() = dy.matrix() * d.weight;
            if (grads != nullptr) {
              RowMatrix dw = dy.matrix().transpose() * x.matrix();
              grads->emplace_back(Eigen::Map<const Vector>(dw.data(), dw.size()));
              grads->emplace_back(dy.matrix().colwise().sum().transpose());
            }
          },
          [&](const Conv2d& c) {
            const ConvGeometry g = conv_geometry(c, in);
            const auto spatial = static_cast<Eigen::Index>(g.out_h * g.out_w);
            RowMatrix dw = RowMatrix::Zero(c.weight.rows(), c.weight.cols());
            Vector db = Vector::Zero(c.bias.size());
            for (std::size_t i = 0; i < n; ++i) {
              Eigen::Map<const RowMatrix> dout(dy.sample(i).data(),
                                               static_cast<Eigen::Index>(c.out_ch), spatial);
              if (grads != nullptr) {
                const RowMatrix cols = im2col(c, g, x.sample(i));
                dw.noalias() += dout * cols.transpose();
                db += dout.rowwise().sum();
              }
              const RowMatrix dcols = c.weight.transpose() * dout;
              col2im_add(c, g, dcols, dx.sample(i));
            }
            if (grads != nullptr) {
              grads->emplace_back(Eigen::Map<const Vector>(dw.data(), dw.size()));
              grads->push_back(std::move(db));
            }
          },
          [&](const ReLU&) {
            for (std::size_t i = 0; i < x.data.size(); ++i)
              dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
          },
          [&](const MaxPool2d& p) {
            const std::size_t ch = in[0], h = in[1], w = in[2];
            const Shape out = output_shape(layer, in);
            const std::size_t oh = out[1], ow = out[2];
            for (std::size_t i = 0; i < n; ++i) {
              auto src = x.sample(i);
              auto g = dy.sample(i);
              auto dst = dx.sample(i);
              for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t oy = 0; oy < oh; ++oy)
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    std::size_t best_idx = 0;
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::size_t ky = 0; ky < p.kernel; ++ky)
                      for (std::size_t kx = 0; kx < p.kernel; ++kx) {
                        const std::size_t idx = (c * h + oy * p.kernel + ky) * w + ox * p.kernel + kx;
                        if (src[idx] > best) {
                          best = src[idx];
                          best_idx = idx;
                        }
                      }
                    dst[best_idx] += g[(c * oh + oy) * ow + ox];
                  }
            }
          },
          [&](const Flatten&) { dx.data = dy.data; },
      },
      layer);
  return dx;
}

void check_input(const Network& net, const Tensor& x, std::size_t first_layer) {
  const Shape& expected = net.activation_shape(first_layer);
  if (x.sample_shape() != expected) {
    throw ShapeError("input shape " + shape_str(x.sample_shape()) + " does not match " +
                     shape_str(expected));
  }
}

}  // namespace

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> dims)
    : shape(std::move(dims)), data(shape_size(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) throw ShapeError("Tensor: data length does not match shape");
}

Tensor Tensor::single(const Shape& sample_shape, std::vector<double> values) {
  return Tensor(batched(1, sample_shape), std::move(values));
}

std::size_t Tensor::sample_size() const {
  if (shape.empty()) return 0;
  return shape_size(sample_shape());
}

std::span<const double> Tensor::sample(std::size_t i) const {
  const std::size_t s = sample_size();
  return std::span<const double>(data).subspan(i * s, s);
}

std::span<double> Tensor::sample(std::size_t i) {
  const std::size_t s = sample_size();
  return std::span<double>(data).subspan(i * s, s);
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  return {data.data(), static_cast<Eigen::Index>(batch()),
          static_cast<Eigen::Index>(sample_size())};
}

Eigen::Map<RowMatrix> Tensor::matrix() {
  return {data.data(), static_cast<Eigen::Index>(batch()),
          static_cast<Eigen::Index>(sample_size())};
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
               std::size_t stride_, std::size_t padding_)
    : in_ch(in_channels),
      out_ch(out_channels),
      kernel(kernel_size),
      stride(stride_),
      padding(padding_),
      weight(RowMatrix::Zero(static_cast<Eigen::Index>(out_channels),
                             static_cast<Eigen::Index>(in_channels * kernel_size * kernel_size))),
      bias(Vector::Zero(static_cast<Eigen::Index>(out_channels))) {
  if (kernel < 1 || stride < 1) throw ShapeError("Conv2d: kernel and stride must be >= 1");
}

const char* layer_name(const Layer& layer) {
  return std::visit(Overloaded{[](const Dense&) { return "dense"; },
                               [](const Conv2d&) { return "conv2d"; },
                               [](const ReLU&) { return "relu"; },
                               [](const MaxPool2d&) { return "maxpool2d"; },
                               [](const Flatten&) { return "flatten"; }},
                    layer);
}

bool has_parameters(const Layer& layer) {
  return std::holds_alternative<Dense>(layer) || std::holds_alternative<Conv2d>(layer);
}

Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Dense& d) -> Shape {
            if (in.size() != 1 || in[0] != d.in()) {
              throw ShapeError("Dense expects (" + std::to_string(d.in()) + ") input, got " +
                               shape_str(in));
            }
            if (static_cast<std::size_t>(d.bias.size()) != d.out())
              throw ShapeError("Dense bias length does not match output width");
            return {d.out()};
          },
          [&](const Conv2d& c) -> Shape {
            const ConvGeometry g = conv_geometry(c, in);
            if (static_cast<std::size_t>(c.weight.rows()) != c.out_ch ||
                static_cast<std::size_t>(c.weight.cols()) != c.in_ch * c.kernel * c.kernel ||
                static_cast<std::size_t>(c.bias.size()) != c.out_ch)
              throw ShapeError("Conv2d parameter shapes inconsistent with channels/kernel");
            return {c.out_ch, g.out_h, g.out_w};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool2d& p) -> Shape {
            if (p.kernel < 1) throw ShapeError("MaxPool2d kernel must be >= 1");
            if (in.size() != 3 || in[1] < p.kernel || in[2] < p.kernel)
              throw ShapeError("MaxPool2d expects (C,H,W) input at least kernel-sized, got " +
                               shape_str(in));
            return {in[0], in[1] / p.kernel, in[2] / p.kernel};
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
      },
      layer);
}

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0)
    throw ShapeError("Network: empty input shape");
  shapes_.push_back(input_shape_);
  for (const Layer& l : layers_) shapes_.push_back(nn::output_shape(l, shapes_.back()));
}

std::vector<std::span<double>> Network::parameters() {
  std::vector<std::span<double>> out;
  for (Layer& layer : layers_) {
    if (auto* d = std::get_if<Dense>(&layer)) {
      out.emplace_back(d->weight.data(), static_cast<std::size_t>(d->weight.size()));
      out.emplace_back(d->bias.data(), static_cast<std::size_t>(d->bias.size()));
    } else if (auto* c = std::get_if<Conv2d>(&layer)) {
      out.emplace_back(c->weight.data(), static_cast<std::size_t>(c->weight.size()));
      out.emplace_back(c->bias.data(), static_cast<std::size_t>(c->bias.size()));
    }
  }
  return out;
}

std::vector<std::span<const double>> Network::parameters() const {
  auto mutable_self = const_cast<Network*>(this)->parameters();
  return {mutable_self.begin(), mutable_self.end()};
}

void initialize(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < net.depth(); ++i) {
    Layer& layer = net.layer(i);
    auto fill = [&rng](RowMatrix& w, Vector& b, double fan_in) {
      std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
      b.setZero();
    };
    if (auto* d = std::get_if<Dense>(&layer)) {
      fill(d->weight, d->bias, static_cast<double>(d->in()));
    } else if (auto* c = std::get_if<Conv2d>(&layer)) {
      fill(c->weight, c->bias, static_cast<double>(c->in_ch * c->kernel * c->kernel));
    }
  }
}

Network mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("mlp: need at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(Dense(widths[i], widths[i + 1]));
    if (i + 2 < widths.size()) layers.emplace_back(ReLU{});
  }
  Network net({widths.front()}, std::move(layers));
  initialize(net, seed);
  return net;
}

Network concat(const Network& pre, const Network& post) {
  if (pre.output_shape() != post.input_shape())
    throw ShapeError("concat: pre output " + shape_str(pre.output_shape()) +
                     " does not match post input " + shape_str(post.input_shape()));
  std::vector<Layer> layers = pre.layers();
  layers.insert(layers.end(), post.layers().begin(), post.layers().end());
  return Network(pre.input_shape(), std::move(layers));
}

std::pair<Network, Network> split(const Network& net, std::size_t l) {
  if (l < 1 || l >= net.depth()) {
    throw ShapeError("split: layer index " + std::to_string(l) + " outside [1, " +
                     std::to_string(net.depth()) + ")");
  }
  const auto& layers = net.layers();
  Network pre(net.input_shape(), std::vector<Layer>(layers.begin(), layers.begin() + static_cast<long>(l)));
  Network post(net.activation_shape(l), std::vector<Layer>(layers.begin() + static_cast<long>(l), layers.end()));
  return {std::move(pre), std::move(post)};
}

Tensor forward(const Network& net, const Tensor& x) {
  check_input(net, x, 0);
  Tensor cur = x;
  for (const Layer& layer : net.layers()) cur = layer_forward(layer, cur);
  return cur;
}

std::vector<Tensor> forward_all(const Network& net, const Tensor& x) {
  check_input(net, x, 0);
  std::vector<Tensor> acts;
  acts.reserve(net.depth() + 1);
  acts.push_back(x);
  for (const Layer& layer : net.layers()) acts.push_back(layer_forward(layer, acts.back()));
  return acts;
}

BackwardResult backward(const Network& net, const std::vector<Tensor>& activations,
                        const Tensor& output_grad, bool want_param_grads) {
  if (activations.size() != net.depth() + 1)
    throw ShapeError("backward: activation count does not match network depth");
  if (output_grad.shape != activations.back().shape)
    throw ShapeError("backward: output gradient shape mismatch");

  // Layer gradients are collected back to front, then reordered.
  std::vector<std::vector<Vector>> per_layer(net.depth());
  Tensor grad = output_grad;
  for (std::size_t i = net.depth(); i-- > 0;) {
    grad = layer_backward(net.layers()[i], activations[i], grad,
                          want_param_grads ? &per_layer[i] : nullptr);
  }
  BackwardResult out;
  out.input_grad = std::move(grad);
  if (want_param_grads)
    for (auto& g : per_layer)
      for (auto& t : g) out.param_grads.push_back(std::move(t));
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ShapeError("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) - (logits[label] - mx);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= sum;
  return p;
}

LossGrad softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.batch()) throw ShapeError("softmax_cross_entropy: label count mismatch");
  LossGrad out;
  out.grad = Tensor(logits.shape);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = logits.sample(i);
    out.loss_sum += cross_entropy(row, labels[i]);
    const auto p = softmax(row);
    auto g = out.grad.sample(i);
    std::copy(p.begin(), p.end(), g.begin());
    g[labels[i]] -= 1.0;
  }
  return out;
}

Tensor grad_wrt_activation(const Network& net, std::size_t l, const Tensor& x_l,
                           std::span<const std::size_t> labels) {
  if (l >= net.depth()) throw ShapeError("grad_wrt_activation: layer index out of range");
  check_input(net, x_l, l);
  if (labels.size() != x_l.batch()) throw ShapeError("grad_wrt_activation: label count mismatch");

  std::vector<Tensor> acts;
  acts.push_back(x_l);
  for (std::size_t i = l; i < net.depth(); ++i)
    acts.push_back(layer_forward(net.layers()[i], acts.back()));
  const LossGrad lg = softmax_cross_entropy(acts.back(), labels);
  Tensor grad = lg.grad;
  for (std::size_t i = net.depth(); i-- > l;)
    grad = layer_backward(net.layers()[i], acts[i - l], grad, nullptr);
  return grad;
}

Dataset::Dataset(Tensor x, std::vector<std::size_t> y, std::size_t classes)
    : inputs(std::move(x)), labels(std::move(y)), num_classes(classes) {
  if (inputs.batch() != labels.size()) throw ShapeError("Dataset: input and label counts differ");
  for (std::size_t lab : labels)
    if (lab >= num_classes) throw ShapeError("Dataset: label out of range");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t s = inputs.sample_size();
  std::vector<std::size_t> dims = inputs.shape;
  dims[0] = indices.size();
  Tensor x(dims);
  std::vector<std::size_t> y(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = inputs.sample(indices[k]);
    std::copy(src.begin(), src.end(), x.data.begin() + static_cast<long>(k * s));
    y[k] = labels[indices[k]];
  }
  return Dataset(std::move(x), std::move(y), num_classes);
}

ParamGradients grad_wrt_params(const Network& net, const Dataset& batch) {
  if (batch.empty()) throw ShapeError("grad_wrt_params: empty batch");
  const auto acts = forward_all(net, batch.inputs);
  LossGrad lg = softmax_cross_entropy(acts.back(), batch.labels);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : lg.grad.data) v *= inv;
  ParamGradients out;
  out.loss = lg.loss_sum * inv;
  out.grads = backward(net, acts, lg.grad, true).param_grads;
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  if (batch_size == 0) throw ShapeError("make_batches: batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(order.begin() + static_cast<long>(start),
                     order.begin() + static_cast<long>(std::min(n, start + batch_size)));
  return out;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<std::size_t> predict(const Network& net, const Tensor& x) {
  const Tensor logits = forward(net, x);
  std::vector<std::size_t> out(logits.batch());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(logits.sample(i));
  return out;
}

namespace {

void check_step_args(const std::vector<std::span<double>>& params, const std::vector<Vector>& grads,
                     std::span<const double> lrs) {
  if (params.size() != grads.size() || params.size() != lrs.size())
    throw ShapeError("optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].size() != static_cast<std::size_t>(grads[i].size()))
      throw ShapeError("optimizer: parameter/gradient shape mismatch");
}

}  // namespace

void Sgd::step(std::vector<std::span<double>> params, const std::vector<Vector>& grads) const {
  const std::vector<double> lrs(params.size(), lr_);
  step(std::move(params), grads, lrs);
}

void Sgd::step(std::vector<std::span<double>> params, const std::vector<Vector>& grads,
               std::span<const double> lrs) const {
  check_step_args(params, grads, lrs);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i].size(); ++j)
      params[i][j] -= lrs[i] * grads[i](static_cast<Eigen::Index>(j));
}

void Adam::step(std::vector<std::span<double>> params, const std::vector<Vector>& grads) {
  const std::vector<double> lrs(params.size(), lr_);
  step(std::move(params), grads, lrs);
}

void Adam::step(std::vector<std::span<double>> params, const std::vector<Vector>& grads,
                std::span<const double> lrs) {
  check_step_args(params, grads, lrs);
  if (m_.empty()) {
    for (const auto& g : grads) {
      m_.push_back(Vector::Zero(g.size()));
      v_.push_back(Vector::Zero(g.size()));
    }
  } else if (m_.size() != grads.size()) {
    throw ShapeError("Adam: parameter layout changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      params[i][j] -= lrs[i] * (m_[i](k) / c1) / (std::sqrt(v_[i](k) / c2) + eps_);
    }
  }
}

std::vector<double> fit(Network& net, const Dataset& data, const FitOptions& opts) {
  if (data.empty()) throw ShapeError("fit: empty dataset");
  std::mt19937_64 rng(opts.seed);
  Adam adam(opts.lr);
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    double total = 0.0;
    for (const auto& idx : make_batches(data.size(), opts.batch_size, rng)) {
      const ParamGradients pg = grad_wrt_params(net, data.subset(idx));
      if (!std::isfinite(pg.loss)) throw NumericError("fit: non-finite training loss");
      total += pg.loss * static_cast<double>(idx.size());
      adam.step(net.parameters(), pg.grads);
    }
    history.push_back(total / static_cast<double>(data.size()));
  }
  return history;
}

std::size_t count_params(const Network& net) {
  std::size_t total = 0;
  for (const auto& p : net.parameters()) total += p.size();
  return total;
}

std::size_t count_flops(const Network& net, const Shape& input_shape) {
  std::size_t total = 0;
  Shape cur = input_shape;
  for (const Layer& layer : net.layers()) {
    const Shape next = output_shape(layer, cur);
    if (const auto* d = std::get_if<Dense>(&layer)) {
      total += 2 * d->in() * d->out();
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      total += 2 * c->kernel * c->kernel * c->in_ch * c->out_ch * next[1] * next[2];
    } else if (std::holds_alternative<ReLU>(layer) || std::holds_alternative<MaxPool2d>(layer)) {
      total += shape_size(next);
    }
    cur = next;
  }
  return total;
}

std::size_t count_flops(const Network& net) { return count_flops(net, net.input_shape()); }

}  // namespace asnet::nn
