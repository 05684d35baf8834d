#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "idenbat/layers.hpp"

namespace idenbat {

using TensorMap = std::map<std::string, Tensor<double>>;

// Container: magic "IDBTCKPT", uint32 entry count, then per entry a uint32-length name,
// uint32 rank, uint64 extents and float64 payload (little-endian).
void save_tensors(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap load_tensors(const std::filesystem::path& path);

// Parameters and batch-norm buffers of a registry, keyed by their registered names.
template <typename S>
void export_registry(const Registry<S>& reg, TensorMap& out, const std::string& prefix = "");
// Overwrites every registered tensor in place; throws when an entry is missing or misshapen.
template <typename S>
void import_registry(Registry<S>& reg, const TensorMap& in, const std::string& prefix = "");

// Checkpoint = <stem>.ckpt (tensors) + <stem>.json (metadata sidecar).
struct CheckpointFiles {
  std::filesystem::path tensors;
  std::filesystem::path metadata;
  static CheckpointFiles from(const std::filesystem::path& path);
};

void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors,
                      const nlohmann::json& metadata);
std::pair<TensorMap, nlohmann::json> read_checkpoint(const std::filesystem::path& path);

}  // namespace idenbat
