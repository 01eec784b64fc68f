#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lmk/data.hpp"
#include "lmk/losses.hpp"
#include "lmk/netarch.hpp"
#include "lmk/optim.hpp"

namespace lmk {

/// Optimisation settings of one training stage.
struct StageConfig {
  int epochs = 20;
  double lr = 3e-4;
  double lr_decay = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 16;
  double temperature = 0.1;  // contrastive stage only
  int locations = 16;        // contrastive stage only: sampled locations per image
  LossWeights weights;       // landmark stages only
  double clip_norm = 0.0;    // 0 disables clipping
  int val_images = 32;       // validation images for the logged L_eqv (landmark stages)

  void validate(const std::string& section) const;
  nlohmann::json to_json() const;
  static StageConfig from_json(const nlohmann::json& j, const std::string& section);
};

struct EvalConfig {
  std::vector<double> thresholds;       // Acc(d) thresholds, default 2..20
  double pck_threshold = 3.0;           // pixels at the configured resolution
  double ridge_alpha = 0.1;
  std::vector<std::size_t> sweep_sizes{5, 10, 50, 100, 0};  // 0 = full pool
  int repeats = 5;
  std::size_t curve_images = 128;       // test images used for accuracy curves
  std::vector<int> eye_indices;         // empty: layout default

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

/// One file drives every stage. The landmark section is shared by the two-step
/// Step 2 and the end-to-end arm, so both train the same head with the same losses.
struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  std::uint64_t seed = 0;
  bool strict_determinism = true;
  unsigned threads = 1;
  ModelConfig model;
  DatasetSpec data;
  AugmentConfig augment_pretrain = AugmentConfig::preset("pretrain");
  AugmentConfig augment_landmark = AugmentConfig::preset("landmark");
  StageConfig pretrain;
  StageConfig landmark;
  EvalConfig eval;

  /// Desk-scale defaults: 64x64, width multiplier 0.125, D=64, K=10.
  static ExperimentConfig desk_defaults();

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys and a wrong schema_version are ConfigErrors.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

}  // namespace lmk
