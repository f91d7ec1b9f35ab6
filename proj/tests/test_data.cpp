#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "asnet/data.hpp"
#include "asnet/error.hpp"

using namespace asnet;

namespace {

struct ByteWriter {
  std::vector<unsigned char> bytes;
  void be32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) bytes.push_back(static_cast<unsigned char>((v >> s) & 0xff));
  }
  void u8(unsigned char v) { bytes.push_back(v); }
  std::filesystem::path save(const std::string& name) const {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path;
  }
};

std::filesystem::path image_file(const std::string& name, std::uint32_t n, std::vector<unsigned char> pixels) {
  ByteWriter w;
  w.be32(0x00000803);
  w.be32(n);
  w.be32(2);
  w.be32(2);
  for (auto p : pixels) w.u8(p);
  return w.save(name);
}

std::filesystem::path label_file(const std::string& name, std::uint32_t magic, std::vector<unsigned char> labels) {
  ByteWriter w;
  w.be32(magic);
  w.be32(static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) w.u8(l);
  return w.save(name);
}

// Widest slab separating two 2-D point classes, by a fine angular scan
// refined around the best angle.
double max_gap_2d(const nn::Dataset& d) {
  auto gap_at = [&](double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    double lo0 = INFINITY, hi1 = -INFINITY;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double p = c * d.inputs.sample(i)[0] + s * d.inputs.sample(i)[1];
      if (d.labels[i] == 0) lo0 = std::min(lo0, p);
      else hi1 = std::max(hi1, p);
    }
    return lo0 - hi1;
  };
  double best = -INFINITY, best_theta = 0.0;
  for (int k = 0; k < 36000; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / 36000.0;
    if (const double m = gap_at(theta); m > best) best = m, best_theta = theta;
  }
  const double step = 2.0 * std::numbers::pi / 36000.0;
  for (int k = -1000; k <= 1000; ++k) best = std::max(best, gap_at(best_theta + step * k / 1000.0));
  return best;
}

}  // namespace

TEST_CASE("IDX fixture with two 2x2 images") {
  const auto images = image_file("asnet_fixture_images", 2, {0, 255, 51, 102, 1, 2, 3, 254});
  const auto labels = label_file("asnet_fixture_labels", 0x00000801, {7, 3});
  const auto d = data::ingest_idx(images, labels);
  CHECK(d.inputs.shape == std::vector<std::size_t>{2, 1, 2, 2});
  CHECK(d.labels == std::vector<std::size_t>{7, 3});
  CHECK(d.num_classes == 8);
  const std::vector<double> expect{0.0, 1.0, 0.2, 0.4, 1 / 255.0, 2 / 255.0, 3 / 255.0, 254 / 255.0};
  CHECK(d.inputs.data == expect);
  CHECK(data::ingest_idx(images, labels, 10).num_classes == 10);
}

TEST_CASE("IDX errors") {
  const auto images = image_file("asnet_err_images", 2, {0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(data::ingest_idx(images, label_file("asnet_bad_magic", 0x00000803, {1, 2})), FormatError);
  CHECK_THROWS_AS(data::ingest_idx(images, label_file("asnet_count", 0x00000801, {1, 2, 3})), FormatError);
  CHECK_THROWS_AS(data::ingest_idx(image_file("asnet_empty", 0, {}), label_file("asnet_empty_l", 0x00000801, {})),
                  FormatError);
  CHECK_THROWS_AS(data::ingest_idx(image_file("asnet_short", 2, {0, 1, 2}), label_file("asnet_l2", 0x00000801, {1, 2})),
                  FormatError);
  CHECK_THROWS_AS(data::ingest_idx("/nonexistent/images", "/nonexistent/labels"), IoError);
}

TEST_CASE("synthetic blobs are reproducible and ordered") {
  data::SyntheticSpec spec;
  spec.n_per_class = 30;
  spec.classes = 3;
  spec.dim = 4;
  const auto a = data::gen_synthetic(spec, 9);
  const auto b = data::gen_synthetic(spec, 9);
  CHECK(std::memcmp(a.inputs.data.data(), b.inputs.data.data(), a.inputs.data.size() * sizeof(double)) == 0);
  CHECK(a.labels == b.labels);
  CHECK(a.inputs.data != data::gen_synthetic(spec, 10).inputs.data);
  CHECK(a.size() == 90);
  CHECK(a.labels[0] == 0);
  CHECK(a.labels[89] == 2);
}

TEST_CASE("single-class synthetic data") {
  data::SyntheticSpec spec;
  spec.classes = 1;
  spec.dim = 3;
  const auto d = data::gen_synthetic(spec, 1);
  CHECK(d.num_classes == 1);
  CHECK(std::all_of(d.labels.begin(), d.labels.end(), [](auto l) { return l == 0; }));
}

TEST_CASE("separation 10 gives a separating slab of width at least 5") {
  data::SyntheticSpec spec;
  spec.n_per_class = 50;
  spec.classes = 2;
  spec.dim = 2;
  spec.separation = 10.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    CHECK(max_gap_2d(data::gen_synthetic(spec, seed)) >= 5.0);
  }
}

TEST_CASE("rings lie on their radii") {
  data::SyntheticSpec spec;
  spec.kind = data::SyntheticKind::rings;
  spec.classes = 2;
  spec.dim = 3;
  spec.noise = 0.0;
  spec.separation = 2.0;
  const auto d = data::gen_synthetic(spec, 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto s = d.inputs.sample(i);
    CHECK(std::hypot(s[0], s[1]) == doctest::Approx(2.0 * (d.labels[i] + 1)));
    CHECK(s[2] == 0.0);
  }
}

TEST_CASE("synthetic spec parsing and errors") {
  const auto spec = data::parse_synthetic("rings:40:3:5:2.5");
  CHECK(spec.kind == data::SyntheticKind::rings);
  CHECK(spec.n_per_class == 40);
  CHECK(spec.classes == 3);
  CHECK(spec.dim == 5);
  CHECK(spec.separation == 2.5);
  CHECK_THROWS_AS(data::parse_synthetic("blobs:1:2"), ShapeError);
  CHECK_THROWS_AS(data::parse_synthetic("cubes:1:2:3:4"), ShapeError);
  CHECK_THROWS_AS(data::parse_synthetic("blobs:x:2:3:4"), ShapeError);

  data::SyntheticSpec bad;
  bad.n_per_class = 0;
  CHECK_THROWS_AS(data::gen_synthetic(bad, 0), ShapeError);
  bad.n_per_class = 10;
  bad.classes = 3;
  bad.dim = 2;
  CHECK_THROWS_AS(data::gen_synthetic(bad, 0), ShapeError);
}

TEST_CASE("reshape and split") {
  data::SyntheticSpec spec;
  spec.n_per_class = 10;
  spec.dim = 4;
  const auto d = data::gen_synthetic(spec, 2);
  const auto r = data::reshape(d, {1, 2, 2});
  CHECK(r.inputs.shape == std::vector<std::size_t>{20, 1, 2, 2});
  CHECK(r.inputs.data == d.inputs.data);
  CHECK_THROWS_AS(data::reshape(d, {3}), ShapeError);

  const auto [a, b] = data::split_dataset(d, 15, 4);
  CHECK(a.size() == 15);
  CHECK(b.size() == 5);
  const auto [c, e] = data::split_dataset(d, 15, 4);
  CHECK(a.inputs.data == c.inputs.data);
  CHECK_THROWS_AS(data::split_dataset(d, 21, 0), ShapeError);
}
