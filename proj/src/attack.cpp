#include "asnet/attack.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "asnet/error.hpp"
#include "asnet/sketch.hpp"

namespace asnet::attack {

namespace {

using linalg::Index;
using linalg::Matrix;

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::uint64_t little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
  return v;
}

void check_vector(const nn::Tensor& inputs, std::span<const double> v) {
  if (v.size() != inputs.sample_size()) throw ShapeError("perturbation does not match input size");
}

}  // namespace

void AttackConfig::validate() const {
  if (!(delta > 0.0)) throw ShapeError("AttackConfig: delta must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ShapeError("AttackConfig: gamma must lie in (0, 1)");
  if (s0 < 0.0) throw ShapeError("AttackConfig: s0 must be nonnegative");
  if (r_sketch < 2) throw ShapeError("AttackConfig: sketch width must be >= 2");
  if (m_as < 1) throw ShapeError("AttackConfig: m_as must be positive");
}

nn::Tensor perturb(const nn::Tensor& inputs, std::span<const double> v) {
  check_vector(inputs, v);
  nn::Tensor out = inputs;
  for (std::size_t i = 0; i < out.batch(); ++i) {
    auto row = out.sample(i);
    for (std::size_t j = 0; j < v.size(); ++j) row[j] += v[j];
  }
  return out;
}

double attack_ratio(const nn::Network& net, const nn::Tensor& inputs,
                    std::span<const std::size_t> base_predictions, std::span<const double> v) {
  if (inputs.batch() == 0) throw ShapeError("attack_ratio: empty dataset");
  const auto after = nn::predict(net, perturb(inputs, v));
  std::size_t changed = 0;
  for (std::size_t i = 0; i < after.size(); ++i)
    if (after[i] != base_predictions[i]) ++changed;
  return static_cast<double>(changed) / static_cast<double>(after.size());
}

double attack_ratio(const nn::Network& net, const nn::Dataset& data, std::span<const double> v) {
  if (data.empty()) throw ShapeError("attack_ratio: empty dataset");
  check_vector(data.inputs, v);
  const auto base = nn::predict(net, data.inputs);
  return attack_ratio(net, data.inputs, base, v);
}

Vector project_ball(const Vector& v, double delta) {
  if (!(delta > 0.0)) throw ShapeError("project_ball: delta must be positive");
  const double norm = v.norm();
  if (norm <= delta) return v;
  return v * (delta / norm);
}

std::optional<Direction> dominant_direction(const nn::Network& net, const nn::Dataset& data,
                                            const Vector& v, const AttackConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ShapeError("dominant_direction: empty dataset");
  const std::span<const double> vs(v.data(), static_cast<std::size_t>(v.size()));
  const auto base = nn::predict(net, data.inputs);
  const nn::Tensor moved = perturb(data.inputs, vs);
  const auto now = nn::predict(net, moved);

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < base.size(); ++i)
    if (base[i] == now[i]) keep.push_back(i);
  if (keep.empty()) return std::nullopt;
  if (keep.size() > cfg.m_as) {
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(cfg.m_as);
    std::sort(keep.begin(), keep.end());
  }

  const nn::Dataset filtered = data.subset(keep);
  nn::Tensor x = perturb(filtered.inputs, vs);
  std::vector<std::size_t> labels = cfg.use_true_labels ? filtered.labels : nn::predict(net, x);
  const nn::Tensor grads = nn::grad_wrt_activation(net, 0, x, labels);

  const auto dim = static_cast<Index>(grads.sample_size());
  const auto width = static_cast<Index>(std::max<std::size_t>(2, std::min(cfg.r_sketch, keep.size())));
  const auto rows = grads.matrix();
  const Index first = std::min<Index>(width, rows.rows());
  Matrix init = rows.topRows(first).transpose();
  sketch::FrequentDirections fd(dim, width, init);
  for (Index i = first; i < rows.rows(); ++i) fd.update(rows.row(i).transpose());
  const sketch::Spectrum spec = fd.finalize();

  Direction out;
  out.d = spec.v.col(0).normalized();
  out.sigma = spec.sigma(0);
  out.samples = keep.size();
  return out;
}

std::optional<Step> backtrack_step(const nn::Network& net, const nn::Dataset& data, const Vector& v,
                                   const Vector& d, const AttackConfig& cfg) {
  cfg.validate();
  if (std::abs(d.norm() - 1.0) > 1e-8) throw ShapeError("backtrack_step: direction must be unit norm");
  const auto base = nn::predict(net, data.inputs);
  auto ratio = [&](const Vector& w) {
    return attack_ratio(net, data.inputs, base, {w.data(), static_cast<std::size_t>(w.size())});
  };
  const double current = ratio(v);
  double s = cfg.initial_step();
  for (std::size_t i = 0; i <= cfg.max_inner; ++i, s *= cfg.gamma) {
    const double up = ratio(project_ball(v + s * d, cfg.delta));
    const double down = ratio(project_ball(v - s * d, cfg.delta));
    if (up > current || down > current) {
      return up >= down ? Step{s, up} : Step{-s, down};
    }
  }
  return std::nullopt;
}

AttackResult universal_attack(const nn::Network& net, const nn::Dataset& train, const AttackConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ShapeError("universal_attack: empty training set");
  const auto start = std::chrono::steady_clock::now();

  AttackResult out;
  out.v = Vector::Zero(static_cast<Index>(train.inputs.sample_size()));
  const double forced = cfg.initial_step() * std::pow(cfg.gamma, static_cast<double>(cfg.max_inner));
  const auto base = nn::predict(net, train.inputs);

  for (;;) {
    const auto dir = dominant_direction(net, train, out.v, cfg);
    if (!dir) break;
    const auto step = backtrack_step(net, train, out.v, dir->d, cfg);
    if (step) {
      out.v = project_ball(out.v + step->s * dir->d, cfg.delta);
      out.accepted.push_back(true);
    } else {
      out.v = project_ball(out.v + forced * dir->d, cfg.delta);
      out.accepted.push_back(false);
      ++out.failures;
    }
    out.train_ratio_history.push_back(
        attack_ratio(net, train.inputs, base, {out.v.data(), static_cast<std::size_t>(out.v.size())}));
    if (out.failures > cfg.max_failures) break;
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Vector random_attack(std::size_t dim, double delta, std::uint64_t seed) {
  if (dim == 0) throw ShapeError("random_attack: zero dimension");
  if (delta < 0.0) throw ShapeError("random_attack: negative delta");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Index>(dim));
  for (Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  return v * (delta / v.norm());
}

std::string base64_encode_doubles(std::span<const double> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 8);
  for (double d : values) {
    const std::uint64_t bits = little_endian(std::bit_cast<std::uint64_t>(d));
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) |
                            (i + 1 < bytes.size() ? std::uint32_t{bytes[i + 1]} << 8 : 0u) |
                            (i + 2 < bytes.size() ? std::uint32_t{bytes[i + 2]} : 0u);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

std::vector<double> base64_decode_doubles(const std::string& text) {
  std::array<int, 256> lookup{};
  lookup.fill(-1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
  std::vector<unsigned char> bytes;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t n = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int val = 0;
      if (c == '=') {
        ++pad;
      } else {
        val = lookup[static_cast<unsigned char>(c)];
        if (val < 0 || pad > 0) throw FormatError("base64: invalid character");
      }
      n = (n << 6) | static_cast<std::uint32_t>(val);
    }
    bytes.push_back(static_cast<unsigned char>(n >> 16));
    if (pad < 2) bytes.push_back(static_cast<unsigned char>(n >> 8));
    if (pad < 1) bytes.push_back(static_cast<unsigned char>(n));
  }
  if (bytes.size() % 8 != 0) throw FormatError("base64: payload is not a float64 array");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(k)]} << (8 * k);
    out[i] = std::bit_cast<double>(little_endian(bits));
  }
  return out;
}

nlohmann::json config_json(const AttackConfig& cfg) {
  return {{"delta", cfg.delta},         {"s0", cfg.initial_step()},     {"gamma", cfg.gamma},
          {"max_inner", cfg.max_inner}, {"max_failures", cfg.max_failures}, {"m_as", cfg.m_as},
          {"r_sketch", cfg.r_sketch},   {"use_true_labels", cfg.use_true_labels}, {"seed", cfg.seed}};
}

nlohmann::json result_json(const AttackResult& result, const AttackConfig& cfg) {
  nlohmann::json accepted = nlohmann::json::array();
  for (bool a : result.accepted) accepted.push_back(a);
  return {{"config", config_json(cfg)},
          {"dim", result.v.size()},
          {"norm", result.v.norm()},
          {"v_base64", base64_encode_doubles({result.v.data(), static_cast<std::size_t>(result.v.size())})},
          {"train_ratio_history", result.train_ratio_history},
          {"accepted", accepted},
          {"failures", result.failures}};
}

void write_grid(std::ostream& out, std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (rows * cols != values.size()) throw ShapeError("write_grid: size does not match grid");
  const auto old = out.precision(9);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out << (j ? " " : "") << values[i * cols + j];
    out << '\n';
  }
  out.precision(old);
}

}  // namespace asnet::attack
