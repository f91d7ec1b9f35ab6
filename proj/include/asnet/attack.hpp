#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "asnet/linalg.hpp"
#include "asnet/net.hpp"

// Universal adversarial perturbations by recursive active-subspace ascent.
namespace asnet::attack {

using linalg::Vector;

struct AttackConfig {
  double delta = 5.0;            // l2 budget
  double s0 = 0.0;               // initial stepsize; 0 means "use delta"
  double gamma = 0.5;            // backtracking decrease ratio
  std::size_t max_inner = 10;    // I: candidate magnitudes s0 * gamma^i, i = 0..I
  std::size_t max_failures = 10; // stop once failures exceed this
  std::size_t m_as = 200;        // gradients streamed per direction
  std::size_t r_sketch = 32;     // sketch width cap
  bool use_true_labels = false;  // gradient label: prediction at x+v (default) or ground truth
  std::uint64_t seed = 0;

  double initial_step() const { return s0 > 0.0 ? s0 : delta; }
  void validate() const;
};

struct AttackResult {
  Vector v;
  std::vector<double> train_ratio_history;  // after every update
  std::vector<bool> accepted;               // false for forced (failed) steps
  std::size_t failures = 0;
  double wall_time = 0.0;                   // seconds
};

/// Fraction of samples whose predicted class changes when v is added.
/// The reference class is the model's own prediction, not the label.
double attack_ratio(const nn::Network& net, const nn::Dataset& data, std::span<const double> v);

/// Same, with the unperturbed predictions supplied by the caller.
double attack_ratio(const nn::Network& net, const nn::Tensor& inputs,
                    std::span<const std::size_t> base_predictions, std::span<const double> v);

/// v * min(1, delta / ||v||).
Vector project_ball(const Vector& v, double delta);

/// Adds v to every sample.
nn::Tensor perturb(const nn::Tensor& inputs, std::span<const double> v);

struct Direction {
  Vector d;             // unit norm
  double sigma = 0.0;   // leading sketch singular value; 0 means all gradients vanished
  std::size_t samples = 0;
};

/// Dominant active-subspace direction of the input-gradient covariance at
/// x + v over the samples whose prediction v has not changed yet.
/// Returns nullopt when every sample is already flipped.
std::optional<Direction> dominant_direction(const nn::Network& net, const nn::Dataset& data,
                                            const Vector& v, const AttackConfig& cfg);

struct Step {
  double s = 0.0;     // signed stepsize
  double ratio = 0.0; // training ratio after the projected update
};

/// Backtracking over magnitudes s0*gamma^i, both signs; the first magnitude
/// whose better sign strictly raises the training ratio wins.
std::optional<Step> backtrack_step(const nn::Network& net, const nn::Dataset& data, const Vector& v,
                                   const Vector& d, const AttackConfig& cfg);

AttackResult universal_attack(const nn::Network& net, const nn::Dataset& train, const AttackConfig& cfg);

/// Standard normal vector rescaled to norm delta.
Vector random_attack(std::size_t dim, double delta, std::uint64_t seed);

std::string base64_encode_doubles(std::span<const double> values);
std::vector<double> base64_decode_doubles(const std::string& text);

nlohmann::json config_json(const AttackConfig& cfg);
/// v as base64 little-endian float64, ratio history, config echo.
nlohmann::json result_json(const AttackResult& result, const AttackConfig& cfg);

/// Whitespace-separated grid, one row per line.
void write_grid(std::ostream& out, std::span<const double> values, std::size_t rows, std::size_t cols);

}  // namespace asnet::attack
