#include "asnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "asnet/error.hpp"

namespace asnet::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

nn::Dataset ingest_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t num_classes) {
  const auto img = slurp(images);
  const auto lab = slurp(labels);

  if (read_be32(img, 0, images) != kImageMagic)
    throw FormatError(images.string() + ": bad IDX image magic");
  if (read_be32(lab, 0, labels) != kLabelMagic)
    throw FormatError(labels.string() + ": bad IDX label magic");

  const std::size_t n = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lab, 4, labels);
  if (n != n_labels)
    throw FormatError("image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
  if (n == 0) throw FormatError(images.string() + ": empty dataset");
  if (rows == 0 || cols == 0) throw FormatError(images.string() + ": zero image size");
  if (img.size() < 16 + n * rows * cols) throw FormatError(images.string() + ": truncated pixel data");
  if (lab.size() < 8 + n) throw FormatError(labels.string() + ": truncated label data");

  std::vector<double> pixels(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = img[16 + i] / 255.0;
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = lab[8 + i];
  if (num_classes == 0) num_classes = *std::max_element(y.begin(), y.end()) + 1;
  return nn::Dataset(nn::Tensor({n, 1, rows, cols}, std::move(pixels)), std::move(y), num_classes);
}

nn::Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n_per_class == 0 || spec.classes == 0 || spec.dim == 0)
    throw ShapeError("gen_synthetic: counts and dimension must be positive");
  if (spec.kind == SyntheticKind::blobs && spec.dim < spec.classes)
    throw ShapeError("gen_synthetic: blobs need dim >= classes");
  if (spec.kind == SyntheticKind::rings && spec.dim < 2)
    throw ShapeError("gen_synthetic: rings need dim >= 2");
  if (spec.noise < 0.0) throw ShapeError("gen_synthetic: negative noise");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const std::size_t n = spec.n_per_class * spec.classes;
  nn::Tensor x({n, spec.dim});
  std::vector<std::size_t> y(n);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.n_per_class; ++k) {
      const std::size_t i = c * spec.n_per_class + k;
      auto row = x.sample(i);
      y[i] = c;
      for (double& v : row) v = spec.noise * normal(rng);
      if (spec.kind == SyntheticKind::blobs) {
        row[c] += spec.separation;
      } else {
        const double radius = spec.separation * static_cast<double>(c + 1) + row[0];
        const double theta = angle(rng);
        row[0] = radius * std::cos(theta);
        row[1] = radius * std::sin(theta);
      }
    }
  }
  return nn::Dataset(std::move(x), std::move(y), spec.classes);
}

SyntheticSpec parse_synthetic(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.size() != 5) throw ShapeError("synthetic spec must be kind:n:classes:dim:sep, got '" + text + "'");
  SyntheticSpec spec;
  if (parts[0] == "blobs") {
    spec.kind = SyntheticKind::blobs;
  } else if (parts[0] == "rings") {
    spec.kind = SyntheticKind::rings;
  } else {
    throw ShapeError("unknown synthetic kind '" + parts[0] + "'");
  }
  try {
    spec.n_per_class = std::stoul(parts[1]);
    spec.classes = std::stoul(parts[2]);
    spec.dim = std::stoul(parts[3]);
    spec.separation = std::stod(parts[4]);
  } catch (const std::exception&) {
    throw ShapeError("malformed synthetic spec '" + text + "'");
  }
  return spec;
}

nn::Dataset reshape(nn::Dataset data, const nn::Shape& sample_shape) {
  if (nn::shape_size(sample_shape) != data.inputs.sample_size())
    throw ShapeError("reshape: sample sizes differ");
  std::vector<std::size_t> dims{data.size()};
  dims.insert(dims.end(), sample_shape.begin(), sample_shape.end());
  data.inputs.shape = std::move(dims);
  return data;
}

std::pair<nn::Dataset, nn::Dataset> split_dataset(const nn::Dataset& data, std::size_t first_count,
                                                  std::uint64_t seed) {
  if (first_count > data.size()) throw ShapeError("split_dataset: first part larger than dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const std::size_t> all(order);
  return {data.subset(all.first(first_count)), data.subset(all.subspan(first_count))};
}

}  // namespace asnet::data
