#include "lmk/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "lmk/errors.hpp"
#include "lmk/losses.hpp"
#include "lmk/optim.hpp"
#include "lmk/parallel.hpp"
#include "lmk/readout.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace {

constexpr std::uint64_t kPretrainStream = 0x5701;
constexpr std::uint64_t kLandmarkStream = 0x5702;
constexpr std::uint64_t kValidationStream = 0x7A1;

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

// Shuffled batches of one epoch; only full batches unless the split is smaller than B.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const auto b = static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::size_t>> out;
  if (n == 0) return out;
  if (n < b) return {order};
  for (std::size_t s = 0; s + b <= n; s += b) out.emplace_back(order.begin() + s, order.begin() + s + b);
  return out;
}

void accumulate(Gradients& into, const Gradients& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i].add_scaled(from[i]);
}

void check_finite(double loss, const std::string& stage, std::uint64_t batch_seed) {
  if (!std::isfinite(loss)) {
    throw TrainingError(stage + ": non-finite loss at batch seed " + std::to_string(batch_seed));
  }
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

nlohmann::json EpochLog::to_json(bool with_time) const {
  nlohmann::json j{{"stage", stage},
                   {"epoch", epoch},
                   {"lr", lr},
                   {"total", total},
                   {"contrastive", contrastive},
                   {"equivariance", equivariance},
                   {"diversity", diversity},
                   {"variance", variance},
                   {"val_equivariance", finite_or_null(val_equivariance)},
                   {"batches", batches},
                   {"skipped_items", skipped_items}};
  if (with_time) j["wall_seconds"] = wall_seconds;
  return j;
}

nlohmann::json TrainReport::to_json(bool with_time) const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) epochs_json.push_back(e.to_json(with_time));
  return {{"stage", stage},
          {"seed", seed},
          {"config_hash", config_hash},
          {"epochs", epochs_json},
          {"initial_val_equivariance", finite_or_null(initial_val_equivariance)},
          {"features_checksum_before", hex64(features_checksum_before)},
          {"features_checksum_after", hex64(features_checksum_after)}};
}

// ---------------------------------------------------------------------------
// Step 1

FeatureExtractor pretrain_features(const ExperimentConfig& cfg, const Dataset& train, TrainReport* report,
                                   const EpochCallback& on_epoch) {
  cfg.validate();
  const StageConfig& st = cfg.pretrain;
  FeatureExtractor net(cfg.model, cfg.seed);
  AdamW opt(net.parameters(), {0.9, 0.999, 1e-8, st.weight_decay});
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep.stage = "pretrain";
  rep.seed = cfg.seed;
  rep.config_hash = config_hash(cfg.to_json());
  rep.features_checksum_before = net.parameters().checksum();
  const std::uint64_t stream = derive_seed(cfg.seed, kPretrainStream);

  for (int epoch = 0; epoch < st.epochs; ++epoch) {
    Stopwatch clock;
    const double lr = learning_rate_at(st.lr, st.lr_decay, epoch);
    EpochLog log;
    log.stage = "pretrain";
    log.epoch = epoch + 1;
    log.lr = lr;
    const auto batches = epoch_batches(train.size(), st.batch_size, derive_seed(stream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const std::uint64_t batch_seed = derive_seed(stream, static_cast<std::uint64_t>(epoch), bi + 1);
      const auto pairs = sample_pair_batch(train, batches[bi], st.locations, cfg.augment_pretrain, batch_seed);
      const std::size_t b = pairs.size();
      const auto k = static_cast<Eigen::Index>(st.locations);
      std::vector<FeatureExtractor::Tape> tapes(2 * b);
      std::vector<FeatureMap> feats(2 * b);
      parallel_for(2 * b, cfg.threads, [&](std::size_t i) {
        const PairSample& s = pairs[i / 2];
        feats[i] = net.forward(i % 2 == 0 ? s.x : s.x_prime, &tapes[i]);
      });
      Eigen::MatrixXd anchors(static_cast<Eigen::Index>(b) * k, cfg.model.feature_dim);
      Eigen::MatrixXd positives(anchors.rows(), anchors.cols());
      for (std::size_t i = 0; i < b; ++i) {
        anchors.middleRows(static_cast<Eigen::Index>(i) * k, k) = sample_features_at(feats[2 * i], pairs[i].locations);
        positives.middleRows(static_cast<Eigen::Index>(i) * k, k) =
            sample_features_at(feats[2 * i + 1], pairs[i].locations_prime);
      }
      const ContrastiveLoss loss = contrastive_loss(anchors, positives, st.temperature);
      check_finite(loss.value, "pretrain", batch_seed);

      std::vector<Gradients> item_grads(2 * b);
      parallel_for(2 * b, cfg.threads, [&](std::size_t i) {
        const PairSample& s = pairs[i / 2];
        const bool prime = i % 2 == 1;
        FeatureMap grad_f(feats[i].shape());
        const Eigen::MatrixXd& rows = prime ? loss.grad_positive : loss.grad_anchor;
        sample_features_backward(prime ? s.locations_prime : s.locations,
                                 rows.middleRows(static_cast<Eigen::Index>(i / 2) * k, k), grad_f);
        item_grads[i] = net.parameters().zeros_like();
        feats[i] = Tensor();
        net.backward(tapes[i], grad_f, item_grads[i]);
        tapes[i] = {};
      });
      Gradients grads = net.parameters().zeros_like();
      for (const auto& g : item_grads) accumulate(grads, g);
      if (st.clip_norm > 0.0) clip_gradients(grads, st.clip_norm);
      opt.step(grads, lr);

      log.contrastive += loss.value;
      ++log.batches;
    }
    if (log.batches > 0) log.contrastive /= static_cast<double>(log.batches);
    log.total = log.contrastive;
    log.wall_seconds = clock.seconds();
    rep.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  rep.features_checksum_after = net.parameters().checksum();
  return net;
}

// ---------------------------------------------------------------------------
// Step 2 and the end-to-end arm

LandmarkPairLoss landmark_pair_loss(const Tensor& heatmaps, const Tensor& heatmaps_prime, const CoordMap& g,
                                    const DomainSpec& domain, const LossWeights& w, double scale) {
  require_same_shape(heatmaps, heatmaps_prime, "landmark_pair_loss");
  const int k = heatmaps.channels();
  LandmarkPairLoss out;
  out.grad_heatmaps = Tensor(heatmaps.shape());
  out.grad_heatmaps_prime = Tensor(heatmaps.shape());

  std::vector<ProbMap> p1, p2;
  std::vector<Point> y1, y2;
  for (int i = 0; i < k; ++i) {
    p1.push_back(spatial_softmax(heatmap_from_channel(heatmaps, i)));
    p2.push_back(spatial_softmax(heatmap_from_channel(heatmaps_prime, i)));
    y1.push_back(expected_coordinate(p1.back()));
    y2.push_back(expected_coordinate(p2.back()));
  }

  std::vector<Point> gy1(static_cast<std::size_t>(k)), gy2(static_cast<std::size_t>(k));
  try {
    const LandmarkSet transported = transport_landmarks(g, LandmarkSet(y1), domain);
    const EquivarianceLoss eq = equivariance_loss(LandmarkSet(y2), transported);
    out.parts.equivariance = scale * eq.value;
    for (int i = 0; i < k; ++i) {
      const auto u = static_cast<std::size_t>(i);
      gy2[u] = (scale * w.equivariance) * eq.grad_deformed[u];
      gy1[u] = (scale * w.equivariance) * (g.forward_jacobian(y1[u]).transpose() * eq.grad_transported[u]);
    }
  } catch (const UndefinedLoss&) {
    out.undefined = true;
  }

  // Diversity and variance act on both images of the pair, averaged.
  const double half = 0.5 * scale;
  const std::vector<ProbMap>* maps[2] = {&p1, &p2};
  const std::vector<Point>* grads_y[2] = {&gy1, &gy2};
  Tensor* grads_h[2] = {&out.grad_heatmaps, &out.grad_heatmaps_prime};
  for (int side = 0; side < 2; ++side) {
    const auto& p = *maps[side];
    const FieldLoss div = diversity_loss(p, w.patch_size);
    const BatchFieldLoss var = variance_loss(std::span<const std::vector<ProbMap>>(maps[side], 1));
    out.parts.diversity += half * div.value;
    out.parts.variance += half * var.value;
    for (int i = 0; i < k; ++i) {
      const auto u = static_cast<std::size_t>(i);
      ScalarField gp(p[u].height, p[u].width);
      for (std::size_t j = 0; j < gp.size(); ++j) {
        gp.values[j] = half * (w.diversity * div.grad[u].values[j] + w.variance * var.grad[0][u].values[j]);
      }
      Heatmap gh = spatial_softmax_backward(p[u], gp);
      const Heatmap ga = spatial_soft_argmax_backward(p[u], (*grads_y[side])[u]);
      for (std::size_t j = 0; j < gh.size(); ++j) gh.values[j] += ga.values[j];
      field_to_channel(gh, *grads_h[side], i);
    }
  }
  return out;
}

namespace {

LandmarkModel run_landmark_training(const ExperimentConfig& cfg, LandmarkModel model, const Dataset& train,
                                    const Dataset& val, bool train_features, const std::string& stage,
                                    TrainReport& rep, const EpochCallback& on_epoch) {
  const StageConfig& st = cfg.landmark;
  const AdamWConfig adam{0.9, 0.999, 1e-8, st.weight_decay};
  AdamW opt_head(model.head.parameters(), adam);
  AdamW opt_features(model.features.parameters(), adam);
  rep.stage = stage;
  rep.seed = cfg.seed;
  rep.config_hash = config_hash(cfg.to_json());
  rep.features_checksum_before = model.features.parameters().checksum();
  const std::uint64_t val_seed = derive_seed(cfg.seed, kValidationStream);
  const auto val_count = static_cast<std::size_t>(st.val_images);
  if (!val.empty() && val_count > 0) {
    rep.initial_val_equivariance = validation_equivariance(model, val, val_count, cfg.augment_landmark, val_seed);
  }
  const std::uint64_t stream = derive_seed(cfg.seed, kLandmarkStream);

  for (int epoch = 0; epoch < st.epochs; ++epoch) {
    Stopwatch clock;
    const double lr = learning_rate_at(st.lr, st.lr_decay, epoch);
    EpochLog log;
    log.stage = stage;
    log.epoch = epoch + 1;
    log.lr = lr;
    const auto batches = epoch_batches(train.size(), st.batch_size, derive_seed(stream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const std::uint64_t batch_seed = derive_seed(stream, static_cast<std::uint64_t>(epoch), bi + 1);
      const auto pairs = sample_pair_batch(train, batches[bi], 0, cfg.augment_landmark, batch_seed);
      const std::size_t b = pairs.size();
      const double scale = 1.0 / static_cast<double>(b);

      struct Item {
        LossParts parts;
        bool undefined = false;
        Gradients head, features;
      };
      std::vector<Item> items(b);
      parallel_for(b, cfg.threads, [&](std::size_t i) {
        const PairSample& s = pairs[i];
        Item& it = items[i];
        FeatureExtractor::Tape tf1, tf2;
        LandmarkHead::Tape th1, th2;
        const FeatureMap f1 = model.features.forward(s.x, train_features ? &tf1 : nullptr);
        const FeatureMap f2 = model.features.forward(s.x_prime, train_features ? &tf2 : nullptr);
        const Tensor h1 = model.head.forward(f1, &th1);
        const Tensor h2 = model.head.forward(f2, &th2);
        const LandmarkPairLoss l = landmark_pair_loss(h1, h2, s.g, domain_of(s.x), st.weights, scale);
        it.parts = l.parts;
        it.undefined = l.undefined;
        it.head = model.head.parameters().zeros_like();
        const Tensor gf1 = model.head.backward(th1, l.grad_heatmaps, it.head, train_features);
        const Tensor gf2 = model.head.backward(th2, l.grad_heatmaps_prime, it.head, train_features);
        if (train_features) {
          it.features = model.features.parameters().zeros_like();
          model.features.backward(tf1, gf1, it.features);
          model.features.backward(tf2, gf2, it.features);
        }
      });

      LossParts parts;
      Gradients g_head = model.head.parameters().zeros_like();
      Gradients g_features;
      if (train_features) g_features = model.features.parameters().zeros_like();
      for (const auto& it : items) {
        parts.equivariance += it.parts.equivariance;
        parts.diversity += it.parts.diversity;
        parts.variance += it.parts.variance;
        log.skipped_items += it.undefined ? 1 : 0;
        accumulate(g_head, it.head);
        if (train_features) accumulate(g_features, it.features);
      }
      const double total = combined_landmark_loss(st.weights, parts);
      check_finite(total, stage, batch_seed);
      if (st.clip_norm > 0.0) {
        clip_gradients(g_head, st.clip_norm);
        if (train_features) clip_gradients(g_features, st.clip_norm);
      }
      opt_head.step(g_head, lr);
      if (train_features) opt_features.step(g_features, lr);

      log.equivariance += parts.equivariance;
      log.diversity += parts.diversity;
      log.variance += parts.variance;
      ++log.batches;
    }
    if (log.batches > 0) {
      const double n = static_cast<double>(log.batches);
      log.equivariance /= n;
      log.diversity /= n;
      log.variance /= n;
    }
    log.total = combined_landmark_loss(st.weights, {log.equivariance, log.diversity, log.variance});
    if (!val.empty() && val_count > 0) {
      log.val_equivariance = validation_equivariance(model, val, val_count, cfg.augment_landmark, val_seed);
    }
    log.wall_seconds = clock.seconds();
    rep.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  rep.features_checksum_after = model.features.parameters().checksum();
  return model;
}

}  // namespace

LandmarkModel train_landmarks(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                              const Checkpoint& features, TrainReport* report, const EpochCallback& on_epoch) {
  cfg.validate();
  const ModelConfig& a = features.config;
  const ModelConfig& b = cfg.model;
  if (a.in_channels != b.in_channels || a.feature_dim != b.feature_dim || a.depth != b.depth ||
      a.base_width != b.base_width || a.width_multiplier != b.width_multiplier) {
    throw ConfigError("feature checkpoint " + a.to_json().dump() + " does not match model config " + b.to_json().dump());
  }
  LandmarkModel model(cfg.model, cfg.seed);
  restore_parameters(features, model.features.parameters());
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  LandmarkModel out = run_landmark_training(cfg, std::move(model), train, val, false, "landmark", rep, on_epoch);
  if (rep.features_checksum_after != rep.features_checksum_before) {
    throw TrainingError("landmark training modified the frozen feature extractor");
  }
  return out;
}

LandmarkModel train_end_to_end(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                               TrainReport* report, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  return run_landmark_training(cfg, LandmarkModel(cfg.model, cfg.seed), train, val, true, "end2end", rep, on_epoch);
}

double validation_equivariance(const LandmarkModel& model, const Dataset& val, std::size_t count,
                               const AugmentConfig& aug, std::uint64_t seed) {
  count = std::min(count, val.size());
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const Image& x = val[i].image;
    const DomainSpec domain = domain_of(x);
    Rng rng(derive_seed(seed, i));
    const CoordMap g = sample_deformation(aug, domain, rng);
    const LandmarkSet y = model.landmarks(x);
    const LandmarkSet y_def = model.landmarks(warp_image(g, x));
    try {
      total += equivariance_loss(y_def, transport_landmarks(g, y, domain)).value;
      ++used;
    } catch (const UndefinedLoss&) {
    }
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace lmk
