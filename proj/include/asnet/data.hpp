#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "asnet/net.hpp"

namespace asnet::data {

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Inputs have shape (N, 1, rows, cols) with pixels scaled to [0, 1].
/// `num_classes` of 0 infers max(label) + 1.
nn::Dataset ingest_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t num_classes = 0);

enum class SyntheticKind { blobs, rings };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::blobs;
  std::size_t n_per_class = 100;
  std::size_t classes = 2;
  std::size_t dim = 2;
  double separation = 5.0;
  double noise = 1.0;  // isotropic standard deviation
};

/// blobs: N(separation * e_c, noise^2 I) per class c (e_c the c-th simplex vertex).
/// rings: class c lies on radius separation * (c + 1) in the first two
/// coordinates (radial jitter and remaining coordinates ~ N(0, noise^2)).
/// Samples are ordered by class.
nn::Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Parses "kind:n_per_class:classes:dim:separation".
SyntheticSpec parse_synthetic(const std::string& text);

/// Same data viewed with a different per-sample shape of equal size.
nn::Dataset reshape(nn::Dataset data, const nn::Shape& sample_shape);

/// Seeded split into (first, second) with `first_count` samples in the first part.
std::pair<nn::Dataset, nn::Dataset> split_dataset(const nn::Dataset& data, std::size_t first_count,
                                                  std::uint64_t seed);

}  // namespace asnet::data
