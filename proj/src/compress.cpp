#include "asnet/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "asnet/error.hpp"
#include "asnet/log.hpp"
#include "asnet/model_io.hpp"

namespace asnet::compress {

namespace {

using linalg::Index;

std::vector<std::size_t> seeded_prefix(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(n, count));
  return order;
}

Matrix to_matrix(const nn::Tensor& t) { return t.matrix(); }

nn::Tensor logits_tensor(const Matrix& y) {
  nn::Tensor t({static_cast<std::size_t>(y.rows()), static_cast<std::size_t>(y.cols())});
  t.matrix() = y;
  return t;
}

// Per-row soft target: beta * softmax(teacher) + (1 - beta) * onehot(label).
Matrix soft_targets(const nn::Tensor& teacher_logits, std::span<const std::size_t> labels, double beta) {
  const auto n = static_cast<Index>(labels.size());
  const auto k = static_cast<Index>(teacher_logits.sample_size());
  Matrix target(n, k);
  for (Index i = 0; i < n; ++i) {
    const auto p = nn::softmax(teacher_logits.sample(static_cast<std::size_t>(i)));
    for (Index j = 0; j < k; ++j) target(i, j) = beta * p[static_cast<std::size_t>(j)];
    target(i, static_cast<Index>(labels[static_cast<std::size_t>(i)])) += 1.0 - beta;
  }
  return target;
}

// Sum over rows of -sum_j target_ij log softmax(student_i)_j, and its
// gradient softmax(student) - target.
double soft_cross_entropy(const Matrix& student, const Matrix& target, Matrix* grad) {
  double total = 0.0;
  if (grad != nullptr) grad->resize(student.rows(), student.cols());
  for (Index i = 0; i < student.rows(); ++i) {
    const double mx = student.row(i).maxCoeff();
    const double lse = mx + std::log((student.row(i).array() - mx).exp().sum());
    for (Index j = 0; j < student.cols(); ++j) {
      const double logp = student(i, j) - lse;
      total -= target(i, j) * logp;
      if (grad != nullptr) (*grad)(i, j) = std::exp(logp) - target(i, j);
    }
  }
  return total;
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.beta < 0.0 || cfg.beta > 1.0) throw ShapeError("TrainConfig: beta must lie in [0, 1]");
  if (!(cfg.lr_pre > 0.0) || !(cfg.lr_head > 0.0)) throw ShapeError("TrainConfig: stepsizes must be positive");
  if (cfg.batch_size == 0) throw ShapeError("TrainConfig: batch size must be positive");
  if (cfg.lambda < 0.0) throw ShapeError("TrainConfig: lambda must be nonnegative");
}

struct StepGradients {
  double loss_sum = 0.0;
  std::vector<Vector> grads;  // aligned with AsNet::parameters()
};

StepGradients asnet_gradients(const AsNet& m, const nn::Dataset& batch, const Matrix& target) {
  const auto acts = nn::forward_all(m.pre, batch.inputs);
  const nn::Tensor& feat = acts.back();
  const Matrix x = to_matrix(feat);
  const Matrix z = x * m.v1;
  const Matrix y = pce::predict(m.pce, z);

  Matrix dy;
  StepGradients out;
  out.loss_sum = soft_cross_entropy(y, target, &dy);
  dy /= static_cast<double>(batch.size());

  const pce::PceBatchGradient pg = pce::pce_backward(m.pce, z, dy);
  const Matrix dv1 = x.transpose() * pg.dz;
  nn::Tensor dx(feat.shape);
  dx.matrix() = pg.dz * m.v1.transpose();

  out.grads = nn::backward(m.pre, acts, dx, true).param_grads;
  out.grads.emplace_back(Eigen::Map<const Vector>(dv1.data(), dv1.size()));
  out.grads.emplace_back(Eigen::Map<const Vector>(pg.dcoeffs.data(), pg.dcoeffs.size()));
  return out;
}

AsNet train_loop(AsNet m, const nn::Network& teacher, const nn::Dataset& data, const TrainConfig& cfg,
                 double lambda, TrainHistory* history) {
  validate_config(cfg);
  if (data.empty()) throw ShapeError("training: empty dataset");
  if (teacher.input_shape() != m.pre.input_shape())
    throw ShapeError("training: teacher and ASNet input shapes differ");

  const nn::Tensor teacher_logits = nn::forward(teacher, data.inputs);
  if (teacher_logits.sample_size() != m.outputs())
    throw ShapeError("training: teacher and ASNet output widths differ");
  const Matrix all_targets = soft_targets(teacher_logits, data.labels, cfg.beta);

  std::vector<double> lrs(m.parameters().size(), cfg.lr_head);
  std::fill(lrs.begin(), lrs.begin() + static_cast<long>(m.pre_tensor_count()), cfg.lr_pre);

  TrainHistory local;
  local.initial_loss = distillation_loss(m, teacher_logits, data, cfg.beta);

  nn::Adam adam(1.0);
  const nn::Sgd sgd(1.0);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : nn::make_batches(data.size(), cfg.batch_size, rng)) {
      const nn::Dataset batch = data.subset(idx);
      Matrix target(static_cast<Index>(idx.size()), all_targets.cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        target.row(static_cast<Index>(i)) = all_targets.row(static_cast<Index>(idx[i]));

      const StepGradients sg = asnet_gradients(m, batch, target);
      if (!std::isfinite(sg.loss_sum)) {
        throw NumericError("training: non-finite loss at epoch " + std::to_string(epoch));
      }
      auto params = m.parameters();
      if (cfg.optimizer == Optimizer::adam) {
        adam.step(params, sg.grads, lrs);
      } else {
        sgd.step(params, sg.grads, lrs);
      }
      if (lambda > 0.0)
        for (std::size_t t = 0; t < params.size(); ++t) soft_threshold(params[t], lrs[t] * lambda);
    }
    const double loss = distillation_loss(m, teacher_logits, data, cfg.beta);
    if (!std::isfinite(loss)) throw NumericError("training: non-finite loss after epoch " + std::to_string(epoch));
    local.epoch_loss.push_back(loss);
    log::debug("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
  }
  if (history != nullptr) *history = std::move(local);
  return m;
}

std::size_t count_nonzero(std::span<const double> values) {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](double v) { return v != 0.0; }));
}

double accuracy_of(const nn::Tensor& logits, const std::vector<std::size_t>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (nn::argmax(logits.sample(i)) == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

std::vector<std::span<double>> AsNet::parameters() {
  auto out = pre.parameters();
  out.emplace_back(v1.data(), static_cast<std::size_t>(v1.size()));
  out.emplace_back(pce.coeffs.data(), static_cast<std::size_t>(pce.coeffs.size()));
  return out;
}

std::vector<std::span<const double>> AsNet::parameters() const {
  auto p = const_cast<AsNet*>(this)->parameters();
  return {p.begin(), p.end()};
}

std::size_t AsNet::pre_tensor_count() const { return pre.parameters().size(); }

std::size_t block_boundary(const nn::Network& net, std::size_t block) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < net.depth(); ++i)
    if (nn::has_parameters(net.layers()[i])) starts.push_back(i);
  if (block < 1 || block >= starts.size()) {
    throw ShapeError("cut block " + std::to_string(block) + " outside [1, " +
                     std::to_string(starts.size()) + ")");
  }
  return starts[block];
}

BuildResult build(const nn::Network& net, const nn::Dataset& data, const BuildOptions& opts) {
  if (data.empty()) throw ShapeError("build: empty dataset");
  auto [pre, post] = nn::split(net, opts.cut_layer);

  sketch::SubspaceOptions so;
  so.width = std::max<sketch::Index>(opts.sketch_width, static_cast<sketch::Index>(opts.rank));
  so.width = std::max<sketch::Index>(so.width, 2);
  so.samples = std::max(opts.m_as, static_cast<std::size_t>(so.width));
  so.epsilon = opts.epsilon;
  so.seed = opts.seed;
  if (opts.rank > 0) so.fixed_rank = opts.rank;

  BuildResult out;
  out.subspace = sketch::compute_active_subspace(pre, post, data, so);

  const auto idx = seeded_prefix(data.size(), opts.m_pce, opts.seed + 1);
  const nn::Dataset sample = data.subset(idx);
  const nn::Tensor feat = nn::forward(pre, sample.inputs);
  const Matrix z = to_matrix(feat) * out.subspace.v1;
  const Matrix y = to_matrix(nn::forward(post, feat));

  pce::FitResult fitted = pce::fit(z, y, opts.order, opts.ridge);
  out.fit = std::move(fitted.report);
  out.model = AsNet{std::move(pre), out.subspace.v1, std::move(fitted.model), opts.cut_layer};
  return out;
}

Matrix features(const AsNet& m, const nn::Tensor& x) {
  const nn::Tensor feat = nn::forward(m.pre, x);
  if (feat.sample_size() != m.feature_dim()) throw ShapeError("ASNet: pre-model width does not match v1");
  return to_matrix(feat);
}

nn::Tensor asnet_forward(const AsNet& m, const nn::Tensor& x) {
  return logits_tensor(pce::predict(m.pce, Matrix(features(m, x) * m.v1)));
}

double distillation_loss(const AsNet& m, const nn::Tensor& teacher_logits, const nn::Dataset& data,
                         double beta) {
  if (data.empty()) throw ShapeError("distillation_loss: empty dataset");
  const Matrix target = soft_targets(teacher_logits, data.labels, beta);
  const Matrix student = to_matrix(asnet_forward(m, data.inputs));
  return soft_cross_entropy(student, target, nullptr) / static_cast<double>(data.size());
}

AsNet fine_tune(AsNet m, const nn::Network& teacher, const nn::Dataset& data, const TrainConfig& cfg,
                TrainHistory* history) {
  return train_loop(std::move(m), teacher, data, cfg, 0.0, history);
}

void soft_threshold(std::span<double> values, double t) {
  if (t < 0.0) throw ShapeError("soft_threshold: negative threshold");
  for (double& v : values) {
    const double mag = std::abs(v) - t;
    v = mag > 0.0 ? std::copysign(mag, v) : 0.0;
  }
}

std::vector<double> soft_threshold(std::span<const double> values, double t) {
  std::vector<double> out(values.begin(), values.end());
  soft_threshold(std::span<double>(out), t);
  return out;
}

AsNet retrain_sparse(AsNet m, const nn::Network& teacher, const nn::Dataset& data,
                     const TrainConfig& cfg, TrainHistory* history) {
  if (cfg.lambda < 0.0) throw ShapeError("retrain_sparse: lambda must be nonnegative");
  return train_loop(std::move(m), teacher, data, cfg, cfg.lambda, history);
}

std::size_t count_params(const AsNet& m) {
  return nn::count_params(m.pre) + m.feature_dim() * m.reduced_dim() + m.pce.index_set.size() * m.outputs();
}

std::size_t count_nonzeros(const AsNet& m) {
  std::size_t total = 0;
  for (const auto& p : m.parameters()) total += count_nonzero(p);
  return total;
}

std::size_t count_nonzeros(const nn::Network& net) {
  std::size_t total = 0;
  for (const auto& p : net.parameters()) total += count_nonzero(p);
  return total;
}

std::size_t pce_flops(const pce::MultiIndexSet& set, std::size_t outputs) {
  const std::size_t r = set.dim;
  const std::size_t p = set.order;
  std::size_t total = 2 * r;                        // standardization
  if (p >= 2) total += 4 * r * (p - 1);             // normalized Hermite recurrence
  for (const auto& t : set.terms)                   // tensor products
    if (t.size() > 1) total += t.size() - 1;
  total += 2 * set.size() * outputs;                // coefficient combination
  return total;
}

std::size_t count_flops(const AsNet& m) {
  return nn::count_flops(m.pre) + 2 * m.feature_dim() * m.reduced_dim() +
         pce_flops(m.pce.index_set, m.outputs());
}

double sparsity(const AsNet& m) {
  const std::size_t total = count_params(m);
  return total == 0 ? 0.0 : 1.0 - static_cast<double>(count_nonzeros(m)) / static_cast<double>(total);
}

Evaluation evaluate(const AsNet& m, const nn::Dataset& data) {
  if (data.empty()) throw ShapeError("evaluate: empty dataset");
  return {accuracy_of(asnet_forward(m, data.inputs), data.labels), count_params(m), count_nonzeros(m),
          count_flops(m)};
}

Evaluation evaluate(const nn::Network& net, const nn::Dataset& data) {
  if (data.empty()) throw ShapeError("evaluate: empty dataset");
  return {accuracy_of(nn::forward(net, data.inputs), data.labels), nn::count_params(net),
          count_nonzeros(net), nn::count_flops(net)};
}

nlohmann::json sparsity_report(const AsNet& m) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto params = m.parameters();
  const std::size_t n_pre = m.pre_tensor_count();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::string name;
    if (i < n_pre) {
      name = "pre." + std::to_string(i / 2) + (i % 2 == 0 ? ".weight" : ".bias");
    } else {
      name = (i == n_pre) ? "v1" : "pce.coeffs";
    }
    tensors.push_back({{"name", name}, {"params", params[i].size()}, {"nonzeros", count_nonzero(params[i])}});
  }
  return {{"tensors", tensors},
          {"params", count_params(m)},
          {"nonzeros", count_nonzeros(m)},
          {"sparsity", sparsity(m)}};
}

void save_asnet(const AsNet& m, const std::filesystem::path& path, const nlohmann::json& metadata) {
  nlohmann::json manifest;
  manifest["kind"] = "asnet";
  manifest["pre"] = io::network_manifest(m.pre);
  manifest["cut_layer"] = m.cut_layer;
  manifest["v1"] = {{"rows", m.v1.rows()}, {"cols", m.v1.cols()}};
  manifest["pce"] = {{"dim", m.pce.dim()}, {"order", m.pce.order()}, {"outputs", m.outputs()}};
  if (!metadata.empty()) manifest["metadata"] = metadata;

  std::vector<double> blob;
  io::append_parameters(m.pre, blob);
  for (Index i = 0; i < m.v1.rows(); ++i)
    for (Index j = 0; j < m.v1.cols(); ++j) blob.push_back(m.v1(i, j));
  blob.insert(blob.end(), m.pce.mean.data(), m.pce.mean.data() + m.pce.mean.size());
  blob.insert(blob.end(), m.pce.stddev.data(), m.pce.stddev.data() + m.pce.stddev.size());
  for (Index i = 0; i < m.pce.coeffs.rows(); ++i)
    for (Index j = 0; j < m.pce.coeffs.cols(); ++j) blob.push_back(m.pce.coeffs(i, j));
  io::write_model(path, std::move(manifest), blob);
}

AsNet load_asnet(const std::filesystem::path& path) {
  io::ModelFile file = io::read_model(path);
  const auto& mf = file.manifest;
  if (io::model_kind(mf) != "asnet") throw FormatError(path.string() + ": expected an ASNet model");
  try {
    AsNet m;
    m.pre = io::network_from_manifest(mf.at("pre"));
    m.cut_layer = mf.at("cut_layer").get<std::size_t>();
    const auto rows = mf.at("v1").at("rows").get<Index>();
    const auto cols = mf.at("v1").at("cols").get<Index>();
    const auto dim = mf.at("pce").at("dim").get<std::size_t>();
    const auto order = mf.at("pce").at("order").get<std::size_t>();
    const auto outputs = mf.at("pce").at("outputs").get<Index>();
    if (static_cast<std::size_t>(cols) != dim) throw FormatError("v1 width does not match PCE dimension");

    io::BlobReader reader(file.blob);
    reader.read_parameters(m.pre);
    m.v1.resize(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m.v1(i, j) = reader.take(1)[0];
    pce::MultiIndexSet set = pce::multi_indices(dim, order);
    Vector mean(static_cast<Index>(dim)), stddev(static_cast<Index>(dim));
    reader.read_into({mean.data(), dim});
    reader.read_into({stddev.data(), dim});
    Matrix coeffs(static_cast<Index>(set.size()), outputs);
    for (Index i = 0; i < coeffs.rows(); ++i)
      for (Index j = 0; j < coeffs.cols(); ++j) coeffs(i, j) = reader.take(1)[0];
    if (reader.remaining() != 0) throw FormatError("blob longer than manifest");
    m.pce = pce::PceModel::make(std::move(set), std::move(coeffs), std::move(mean), std::move(stddev));
    if (nn::shape_size(m.pre.output_shape()) != static_cast<std::size_t>(rows))
      throw FormatError("pre-model width does not match v1");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace asnet::compress
