#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "asnet/linalg.hpp"
#include "asnet/net.hpp"
#include "asnet/pce.hpp"
#include "asnet/sketch.hpp"

// ASNet: a network truncated after a cut layer, followed by a linear
// projection onto the active subspace and a polynomial chaos expansion head.
namespace asnet::compress {

using linalg::Matrix;
using linalg::Vector;

struct AsNet {
  nn::Network pre;
  Matrix v1;  // n_l x r
  pce::PceModel pce;
  std::size_t cut_layer = 0;  // position in the original layer list

  std::size_t reduced_dim() const { return static_cast<std::size_t>(v1.cols()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(v1.rows()); }
  std::size_t outputs() const { return pce.outputs(); }

  /// Pre-model tensors, then v1, then the PCE coefficients.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  /// Number of leading parameters() entries that belong to the pre-model.
  std::size_t pre_tensor_count() const;
};

/// Layer position of the boundary after `block` composite blocks. A block
/// starts at each Dense/Conv2d layer and absorbs the ReLU/pool/flatten
/// layers that follow it. Valid blocks: 1 .. (parametric layers - 1).
std::size_t block_boundary(const nn::Network& net, std::size_t block);

struct BuildOptions {
  std::size_t cut_layer = 0;      // layer position, 1 <= l < L
  std::size_t rank = 50;          // r' (0 = use the estimated active-neuron count)
  sketch::Index sketch_width = 50;
  std::size_t m_as = 1000;
  std::size_t m_pce = 2000;
  std::size_t order = 2;
  double epsilon = 0.05;
  double ridge = 1e-10;
  std::uint64_t seed = 0;
};

struct BuildResult {
  AsNet model;
  sketch::ActiveSubspace subspace;
  pce::FitReport fit;
};

/// Steps 1-3: active subspace of the post-model loss, PCE fit of the
/// network logits on z = V1^T pre(x0), assembly. No fine-tuning.
BuildResult build(const nn::Network& net, const nn::Dataset& data, const BuildOptions& opts);

/// Flattened pre-model features, n x n_l.
Matrix features(const AsNet& m, const nn::Tensor& x);

nn::Tensor asnet_forward(const AsNet& m, const nn::Tensor& x);

enum class Optimizer { adam, sgd };

struct TrainConfig {
  double beta = 0.1;
  double lr_pre = 1e-4;
  double lr_head = 1e-5;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lambda = 0.0;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-dataset objective after each epoch
};

/// Mean of beta * H(softmax(teacher), student) + (1 - beta) * CE(student, y).
double distillation_loss(const AsNet& m, const nn::Tensor& teacher_logits, const nn::Dataset& data,
                         double beta);

/// Distillation fine-tuning of every ASNet parameter.
AsNet fine_tune(AsNet m, const nn::Network& teacher, const nn::Dataset& data,
                const TrainConfig& cfg, TrainHistory* history = nullptr);

/// x -> sign(x) * max(|x| - t, 0).
void soft_threshold(std::span<double> values, double t);
std::vector<double> soft_threshold(std::span<const double> values, double t);

/// Stochastic proximal gradient on the distillation loss plus lambda*||theta||_1:
/// after each optimizer step every tensor is soft-thresholded by lr * lambda.
AsNet retrain_sparse(AsNet m, const nn::Network& teacher, const nn::Dataset& data,
                     const TrainConfig& cfg, TrainHistory* history = nullptr);

struct Evaluation {
  double accuracy = 0.0;
  std::size_t params = 0;
  std::size_t nonzeros = 0;
  std::size_t flops = 0;
};

Evaluation evaluate(const AsNet& m, const nn::Dataset& data);
Evaluation evaluate(const nn::Network& net, const nn::Dataset& data);

std::size_t count_params(const AsNet& m);
std::size_t count_nonzeros(const AsNet& m);
std::size_t count_nonzeros(const nn::Network& net);
/// Pre-model flops + projection + PCE head (standardization, Hermite
/// recurrences, basis products, output combination).
std::size_t count_flops(const AsNet& m);
std::size_t pce_flops(const pce::MultiIndexSet& set, std::size_t outputs);
double sparsity(const AsNet& m);

/// Per-tensor parameter and nonzero counts.
nlohmann::json sparsity_report(const AsNet& m);

void save_asnet(const AsNet& m, const std::filesystem::path& path,
                const nlohmann::json& metadata = nlohmann::json::object());
AsNet load_asnet(const std::filesystem::path& path);

}  // namespace asnet::compress
