#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "asnet/net.hpp"

// Model files are a JSON manifest plus a sibling little-endian float64 blob
// (same stem, ".bin" extension) holding every parameter in manifest order.
namespace asnet::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kFormatName = "asnet-model";

/// Layer kinds and shapes only; parameters travel in the blob.
json network_manifest(const nn::Network& net);

/// Rebuilds the architecture from a manifest with zero parameters.
nn::Network network_from_manifest(const json& manifest);

/// Appends every parameter tensor of `net` to `blob`.
void append_parameters(const nn::Network& net, std::vector<double>& blob);

/// Sequential reader over a blob; throws FormatError on overrun.
class BlobReader {
 public:
  explicit BlobReader(std::span<const double> blob) : blob_(blob) {}
  std::span<const double> take(std::size_t n);
  void read_into(std::span<double> dst);
  void read_parameters(nn::Network& net);
  std::size_t remaining() const { return blob_.size() - pos_; }

 private:
  std::span<const double> blob_;
  std::size_t pos_ = 0;
};

std::filesystem::path blob_path(const std::filesystem::path& manifest_path);

/// Writes the manifest (with format and blob fields filled in) and the blob.
void write_model(const std::filesystem::path& path, json manifest, std::span<const double> blob);

struct ModelFile {
  json manifest;
  std::vector<double> blob;
};

ModelFile read_model(const std::filesystem::path& path);

void save_network(const nn::Network& net, const std::filesystem::path& path,
                  const json& metadata = json::object());
nn::Network load_network(const std::filesystem::path& path);

/// "network" or "asnet".
std::string model_kind(const json& manifest);

}  // namespace asnet::io
