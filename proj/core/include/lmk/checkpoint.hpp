#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lmk/netarch.hpp"

namespace lmk {

/// Named-parameter archive. On disk:
///   "LMKCKPT\n" | uint64 little-endian header length | JSON header | raw float32 data
/// The header records the format version, the model config, free-form
/// metadata and, per tensor, its name, shape, element offset and count.
struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelConfig config;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(const ParameterStore& store);
  bool has_prefix(const std::string& prefix) const;
  /// FNV-1a over the tensors whose names start with `prefix`, in store order.
  std::uint64_t checksum(const std::string& prefix = "") const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError on unreadable or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const FeatureExtractor& f, const nlohmann::json& meta = nlohmann::json::object());
Checkpoint make_checkpoint(const LandmarkModel& m, const nlohmann::json& meta = nlohmann::json::object());

/// Copies every parameter of `store` from the checkpoint. Throws ConfigError if
/// a name is missing or a shape differs (e.g. a checkpoint built with another D).
void restore_parameters(const Checkpoint& ckpt, ParameterStore& store);

}  // namespace lmk
