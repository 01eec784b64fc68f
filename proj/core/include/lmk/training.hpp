#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "lmk/checkpoint.hpp"
#include "lmk/config.hpp"
#include "lmk/example.hpp"
#include "lmk/netarch.hpp"

namespace lmk {

struct EpochLog {
  std::string stage;
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double total = 0.0;
  double contrastive = 0.0;
  double equivariance = 0.0;
  double diversity = 0.0;
  double variance = 0.0;
  double val_equivariance = std::numeric_limits<double>::quiet_NaN();
  std::size_t batches = 0;
  std::size_t skipped_items = 0;  // items whose landmarks all left the domain
  double wall_seconds = 0.0;

  /// `with_time` = false drops wall_seconds so logs compare across reruns.
  nlohmann::json to_json(bool with_time = true) const;
};

struct TrainReport {
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochLog> epochs;
  double initial_val_equivariance = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t features_checksum_before = 0;
  std::uint64_t features_checksum_after = 0;

  nlohmann::json to_json(bool with_time = true) const;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Step 1: contrastive pretraining of F on pairs from `augment_pretrain`.
/// Throws TrainingError (with the batch seed) on a non-finite loss.
FeatureExtractor pretrain_features(const ExperimentConfig& cfg, const Dataset& train, TrainReport* report = nullptr,
                                   const EpochCallback& on_epoch = {});

/// Step 2: trains T on L_eqv + L_div + L_variance through T∘F with F frozen
/// (loaded from `features`). Throws ConfigError when the checkpoint does not
/// fit cfg.model, TrainingError if F's checksum changes.
LandmarkModel train_landmarks(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                              const Checkpoint& features, TrainReport* report = nullptr,
                              const EpochCallback& on_epoch = {});

/// Ablation arm: same architecture, losses and batches as train_landmarks,
/// but F is trained jointly from its random initialisation.
LandmarkModel train_end_to_end(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                               TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

/// Mean L_eqv over the first `count` images of `val` under fixed deformations
/// drawn from `aug` with `seed`. Images whose landmarks all leave Λ are skipped.
double validation_equivariance(const LandmarkModel& model, const Dataset& val, std::size_t count,
                               const AugmentConfig& aug, std::uint64_t seed);

/// Loss parts and heatmap gradients of the landmark objective for one pair
/// (x, g♯x), each scaled by `scale`. Exposed for gradient tests.
struct LandmarkPairLoss {
  LossParts parts;
  bool undefined = false;  // no valid equivariance pair
  Tensor grad_heatmaps, grad_heatmaps_prime;
};
LandmarkPairLoss landmark_pair_loss(const Tensor& heatmaps, const Tensor& heatmaps_prime, const CoordMap& g,
                                    const DomainSpec& domain, const LossWeights& w, double scale);

}  // namespace lmk
