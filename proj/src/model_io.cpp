#include "asnet/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "asnet/error.hpp"

namespace asnet::io {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
  return v;
}

std::size_t get_size(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned())
    throw FormatError(std::string("manifest: missing or invalid field '") + key + "'");
  return j.at(key).get<std::size_t>();
}

}  // namespace

json network_manifest(const nn::Network& net) {
  json layers = json::array();
  for (const nn::Layer& layer : net.layers()) {
    json l;
    l["type"] = nn::layer_name(layer);
    std::visit(Overloaded{
                   [&](const nn::Dense& d) {
                     l["in"] = d.in();
                     l["out"] = d.out();
                   },
                   [&](const nn::Conv2d& c) {
                     l["in_ch"] = c.in_ch;
                     l["out_ch"] = c.out_ch;
                     l["kernel"] = c.kernel;
                     l["stride"] = c.stride;
                     l["padding"] = c.padding;
                   },
                   [&](const nn::MaxPool2d& p) { l["kernel"] = p.kernel; },
                   [](const nn::ReLU&) {},
                   [](const nn::Flatten&) {},
               },
               layer);
    layers.push_back(std::move(l));
  }
  json out;
  out["input_shape"] = net.input_shape();
  out["layers"] = std::move(layers);
  return out;
}

nn::Network network_from_manifest(const json& manifest) {
  try {
    const auto input = manifest.at("input_shape").get<nn::Shape>();
    std::vector<nn::Layer> layers;
    for (const json& l : manifest.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "dense") {
        layers.emplace_back(nn::Dense(get_size(l, "in"), get_size(l, "out")));
      } else if (type == "conv2d") {
        layers.emplace_back(nn::Conv2d(get_size(l, "in_ch"), get_size(l, "out_ch"),
                                       get_size(l, "kernel"), get_size(l, "stride"),
                                       get_size(l, "padding")));
      } else if (type == "relu") {
        layers.emplace_back(nn::ReLU{});
      } else if (type == "maxpool2d") {
        layers.emplace_back(nn::MaxPool2d{get_size(l, "kernel")});
      } else if (type == "flatten") {
        layers.emplace_back(nn::Flatten{});
      } else {
        throw FormatError("manifest: unknown layer type '" + type + "'");
      }
    }
    return nn::Network(input, std::move(layers));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void append_parameters(const nn::Network& net, std::vector<double>& blob) {
  for (const auto& p : net.parameters()) blob.insert(blob.end(), p.begin(), p.end());
}

std::span<const double> BlobReader::take(std::size_t n) {
  if (n > remaining()) throw FormatError("model blob shorter than the manifest requires");
  auto out = blob_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void BlobReader::read_into(std::span<double> dst) {
  const auto src = take(dst.size());
  std::copy(src.begin(), src.end(), dst.begin());
}

void BlobReader::read_parameters(nn::Network& net) {
  for (auto p : net.parameters()) read_into(p);
}

std::filesystem::path blob_path(const std::filesystem::path& manifest_path) {
  auto p = manifest_path;
  p.replace_extension(".bin");
  if (p == manifest_path) p += ".bin";
  return p;
}

void write_model(const std::filesystem::path& path, json manifest, std::span<const double> blob) {
  const auto bin = blob_path(path);
  manifest["format"] = kFormatName;
  manifest["format_version"] = kFormatVersion;
  manifest["blob"] = {{"file", bin.filename().string()},
                      {"dtype", "float64"},
                      {"byte_order", "little"},
                      {"count", blob.size()}};

  std::ofstream out_bin(bin, std::ios::binary | std::ios::trunc);
  if (!out_bin) throw IoError("cannot open " + bin.string() + " for writing");
  for (double v : blob) {
    const auto bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out_bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out_bin) throw IoError("write failed: " + bin.string());

  std::ofstream out_json(path, std::ios::trunc);
  if (!out_json) throw IoError("cannot open " + path.string() + " for writing");
  out_json << manifest.dump(2) << '\n';
  if (!out_json) throw IoError("write failed: " + path.string());
}

ModelFile read_model(const std::filesystem::path& path) {
  std::ifstream in_json(path);
  if (!in_json) throw IoError("cannot open " + path.string());
  ModelFile out;
  try {
    out.manifest = json::parse(in_json);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const json& m = out.manifest;
  if (m.value("format", "") != kFormatName) throw FormatError(path.string() + ": not a model manifest");
  if (m.value("format_version", -1) != kFormatVersion)
    throw FormatError(path.string() + ": unsupported format version");
  if (!m.contains("blob")) throw FormatError(path.string() + ": missing blob descriptor");

  const auto bin = path.parent_path() / m["blob"].value("file", "");
  const std::size_t count = get_size(m["blob"], "count");
  std::ifstream in_bin(bin, std::ios::binary);
  if (!in_bin) throw IoError("cannot open " + bin.string());
  out.blob.resize(count);
  for (double& v : out.blob) {
    std::uint64_t bits = 0;
    if (!in_bin.read(reinterpret_cast<char*>(&bits), sizeof bits))
      throw FormatError(bin.string() + ": truncated parameter blob");
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in_bin.peek() != std::char_traits<char>::eof())
    throw FormatError(bin.string() + ": trailing bytes after parameter blob");
  return out;
}

void save_network(const nn::Network& net, const std::filesystem::path& path, const json& metadata) {
  json manifest;
  manifest["kind"] = "network";
  manifest["network"] = network_manifest(net);
  if (!metadata.empty()) manifest["metadata"] = metadata;
  std::vector<double> blob;
  append_parameters(net, blob);
  write_model(path, std::move(manifest), blob);
}

nn::Network load_network(const std::filesystem::path& path) {
  ModelFile file = read_model(path);
  if (model_kind(file.manifest) != "network")
    throw FormatError(path.string() + ": expected a network model");
  nn::Network net = network_from_manifest(file.manifest.at("network"));
  BlobReader reader(file.blob);
  reader.read_parameters(net);
  if (reader.remaining() != 0) throw FormatError(path.string() + ": blob longer than manifest");
  return net;
}

std::string model_kind(const json& manifest) { return manifest.value("kind", ""); }

}  // namespace asnet::io
