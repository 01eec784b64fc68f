#include <cmath>

#include "doctest.h"

#include "lmk/checkpoint.hpp"
#include "lmk/config.hpp"
#include "lmk/errors.hpp"
#include "lmk/geometry.hpp"
#include "lmk/optim.hpp"
#include "lmk/synthetic.hpp"
#include "lmk/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lmk;

namespace {

ParameterStore one_tensor(std::vector<float> values) {
  ParameterStore s;
  s.add("w", {static_cast<int>(values.size())});
  for (std::size_t i = 0; i < values.size(); ++i) s.values()[0].data()[i] = values[i];
  return s;
}

Gradients grads_of(std::vector<float> values) {
  Tensor t(std::vector<int>{static_cast<int>(values.size())});
  for (std::size_t i = 0; i < values.size(); ++i) t.data()[i] = values[i];
  return {t};
}

Dataset tiny_train(const ExperimentConfig& cfg) { return build_dataset(cfg.data).train; }

Tensor random_maps(int k, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(k, h, w);
  for (float& v : t.values()) v = static_cast<float>(uniform(rng, -2.0, 2.0));
  return t;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("AdamW matches a scalar reference over several steps") {
  ParameterStore s = one_tensor({0.5f, -1.0f, 2.0f});
  const AdamWConfig cfg{0.9, 0.999, 1e-8, 0.01};
  AdamW opt(s, cfg);
  double w[3] = {0.5, -1.0, 2.0}, m[3] = {}, v[3] = {};
  const double g_seq[3][3] = {{0.1, -0.2, 0.3}, {0.05, 0.4, -0.1}, {-0.3, 0.0, 0.2}};
  for (int t = 1; t <= 3; ++t) {
    const auto* g = g_seq[t - 1];
    opt.step(grads_of({float(g[0]), float(g[1]), float(g[2])}), 0.01);
    for (int i = 0; i < 3; ++i) {
      const double gi = static_cast<float>(g[i]);
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] = static_cast<float>(w[i] - 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * w[i]));
      CHECK(s.values()[0].data()[i] == doctest::Approx(w[i]).epsilon(1e-6));
    }
  }
  CHECK(opt.steps() == 3);
  CHECK_THROWS_AS(opt.step({}, 0.01), DimensionError);
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  ParameterStore s = one_tensor({1.0f, 2.0f});
  const std::uint64_t before = s.checksum();
  AdamW opt(s, {});
  opt.step(grads_of({3.0f, -4.0f}), 0.0);
  CHECK(s.checksum() == before);
}

TEST_CASE("learning-rate schedule decays geometrically") {
  CHECK(std::abs(learning_rate_at(3e-4, 0.9, 0) - 3e-4) < 1e-12);
  CHECK(std::abs(learning_rate_at(3e-4, 0.9, 1) - 2.7e-4) < 1e-12);
  CHECK(std::abs(learning_rate_at(3e-4, 0.9, 5) - 3e-4 * 0.59049) < 1e-12);
}

TEST_CASE("gradient clipping bounds the global norm") {
  Gradients g = grads_of({3.0f, 4.0f});
  g.push_back(grads_of({12.0f})[0]);
  CHECK(gradient_norm(g) == doctest::Approx(13.0));
  CHECK(clip_gradients(g, 6.5) == doctest::Approx(13.0));
  CHECK(gradient_norm(g) == doctest::Approx(6.5));
  CHECK(g[0].data()[0] == doctest::Approx(1.5));
  CHECK(clip_gradients(g, 100.0) == doctest::Approx(6.5));
  CHECK(gradient_norm(g) == doctest::Approx(6.5));
}

TEST_CASE("pretraining produces finite, decreasing contrastive losses") {
  ExperimentConfig cfg = test_support::tiny_config(3);
  cfg.pretrain.epochs = 4;
  cfg.pretrain.lr = 3e-3;
  TrainReport rep;
  int calls = 0;
  const FeatureExtractor f = pretrain_features(cfg, tiny_train(cfg), &rep, [&](const EpochLog&) { ++calls; });
  REQUIRE(rep.epochs.size() == 4);
  CHECK(calls == 4);
  for (const auto& e : rep.epochs) {
    CHECK(std::isfinite(e.contrastive));
    CHECK(e.batches == 4);
  }
  CHECK(rep.epochs.back().contrastive < rep.epochs.front().contrastive);
  CHECK(rep.features_checksum_after == f.parameters().checksum());
  CHECK(rep.features_checksum_after != rep.features_checksum_before);
  CHECK(rep.epochs[1].lr == doctest::Approx(cfg.pretrain.lr * cfg.pretrain.lr_decay));
}

TEST_CASE("pretraining with a zero learning rate returns the initialisation") {
  ExperimentConfig cfg = test_support::tiny_config(4);
  cfg.pretrain.lr = 0.0;
  const FeatureExtractor f = pretrain_features(cfg, tiny_train(cfg));
  CHECK(f.parameters().checksum() == FeatureExtractor(cfg.model, cfg.seed).parameters().checksum());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const ExperimentConfig cfg = test_support::tiny_config(5);
  const Dataset train = tiny_train(cfg);
  TrainReport ra, rb;
  const FeatureExtractor a = pretrain_features(cfg, train, &ra);
  const FeatureExtractor b = pretrain_features(cfg, train, &rb);
  CHECK(a.parameters().checksum() == b.parameters().checksum());
  CHECK(ra.to_json(false) == rb.to_json(false));

  const SplitDataset d = build_dataset(cfg.data);
  const Checkpoint ck = make_checkpoint(a);
  TrainReport la, lb;
  const LandmarkModel ma = train_landmarks(cfg, d.train, d.val, ck, &la);
  const LandmarkModel mb = train_landmarks(cfg, d.train, d.val, ck, &lb);
  CHECK(ma.head.parameters().checksum() == mb.head.parameters().checksum());
  CHECK(la.to_json(false) == lb.to_json(false));
}

TEST_CASE("landmark training keeps the feature extractor frozen") {
  ExperimentConfig cfg = test_support::tiny_config(6);
  cfg.landmark.epochs = 2;
  const SplitDataset d = build_dataset(cfg.data);
  const Checkpoint ck = make_checkpoint(FeatureExtractor(cfg.model, 77));
  TrainReport rep;
  const LandmarkModel m = train_landmarks(cfg, d.train, d.val, ck, &rep);
  CHECK(rep.features_checksum_before == rep.features_checksum_after);
  CHECK(m.features.parameters().checksum() == ck.checksum("F."));
  CHECK(m.head.parameters().checksum() != LandmarkModel(cfg.model, cfg.seed).head.parameters().checksum());
  REQUIRE(rep.epochs.size() == 2);
  CHECK(std::isfinite(rep.initial_val_equivariance));
  for (const auto& e : rep.epochs) {
    CHECK(std::isfinite(e.val_equivariance));
    CHECK(e.total == doctest::Approx(combined_landmark_loss(cfg.landmark.weights,
                                                            {e.equivariance, e.diversity, e.variance})));
  }
}

TEST_CASE("a checkpoint with another feature width is rejected") {
  ExperimentConfig cfg = test_support::tiny_config(6);
  const SplitDataset d = build_dataset(cfg.data);
  ModelConfig other = cfg.model;
  other.feature_dim = 16;
  CHECK_THROWS_AS(train_landmarks(cfg, d.train, d.val, make_checkpoint(FeatureExtractor(other, 1))), ConfigError);
}

TEST_CASE("identity deformations give zero equivariance loss") {
  ExperimentConfig cfg = test_support::tiny_config(7);
  cfg.augment_landmark = AugmentConfig::preset("identity");
  const SplitDataset d = build_dataset(cfg.data);
  TrainReport rep;
  train_landmarks(cfg, d.train, d.val, make_checkpoint(FeatureExtractor(cfg.model, 1)), &rep);
  CHECK(std::abs(rep.epochs[0].equivariance) < 1e-12);
  CHECK(std::abs(rep.initial_val_equivariance) < 1e-12);
}

TEST_CASE("both arms train the same architecture from the same batches") {
  ExperimentConfig cfg = test_support::tiny_config(8);
  cfg.landmark.lr = 0.0;
  const SplitDataset d = build_dataset(cfg.data);
  const LandmarkModel init(cfg.model, cfg.seed);
  TrainReport r2, re;
  const LandmarkModel two = train_landmarks(cfg, d.train, d.val, make_checkpoint(init.features), &r2);
  const LandmarkModel e2e = train_end_to_end(cfg, d.train, d.val, &re);
  CHECK(two.head.parameters().parameter_count() == e2e.head.parameters().parameter_count());
  CHECK(two.features.parameters().parameter_count() == e2e.features.parameters().parameter_count());
  // With nothing learned, the arms see identical batches and report identical losses.
  CHECK(two.head.parameters().checksum() == e2e.head.parameters().checksum());
  CHECK(e2e.features.parameters().checksum() == init.features.parameters().checksum());
  REQUIRE(r2.epochs.size() == re.epochs.size());
  for (std::size_t i = 0; i < r2.epochs.size(); ++i) {
    CHECK(r2.epochs[i].total == re.epochs[i].total);
    CHECK(r2.epochs[i].val_equivariance == re.epochs[i].val_equivariance);
  }
}

TEST_CASE("end-to-end training updates the feature extractor") {
  ExperimentConfig cfg = test_support::tiny_config(9);
  const SplitDataset d = build_dataset(cfg.data);
  TrainReport rep;
  train_end_to_end(cfg, d.train, d.val, &rep);
  CHECK(rep.stage == "end2end");
  CHECK(rep.features_checksum_before != rep.features_checksum_after);
}

TEST_CASE("landmark pair loss gradients match finite differences") {
  const int k = 3, h = 12, w = 12;
  const DomainSpec dom{h, w, 3};
  const CoordMap g = make_affine(0.15, {1.05, 0.95}, 0.05, {0.4, -0.3}, dom.center());
  LossWeights lw;
  lw.patch_size = 3;
  lw.diversity = 0.7;
  lw.variance = 0.3;
  // Spread heatmaps keep all landmarks well inside after the small map.
  Tensor a = random_maps(k, h, w, 1), b = random_maps(k, h, w, 2);
  const LandmarkPairLoss l = landmark_pair_loss(a, b, g, dom, lw, 0.5);
  REQUIRE_FALSE(l.undefined);
  auto total = [&](const Tensor& x, const Tensor& y) {
    return combined_landmark_loss(lw, landmark_pair_loss(x, y, g, dom, lw, 0.5).parts);
  };
  double worst = 0.0;
  for (int side = 0; side < 2; ++side) {
    Tensor& t = side == 0 ? a : b;
    const Tensor& grad = side == 0 ? l.grad_heatmaps : l.grad_heatmaps_prime;
    for (std::size_t i = 0; i < t.size(); i += 7) {
      const float v = t.data()[i];
      t.data()[i] = v + 1e-2f;
      const double step_up = static_cast<double>(t.data()[i]) - v;
      const double up = total(a, b);
      t.data()[i] = v - 1e-2f;
      const double step_down = v - static_cast<double>(t.data()[i]);
      const double down = total(a, b);
      t.data()[i] = v;
      const double fd = (up - down) / (step_up + step_down);
      worst = std::max(worst, std::abs(fd - grad.data()[i]) / std::max(1e-3, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("validation equivariance is reproducible and skips nothing under identity") {
  const ExperimentConfig cfg = test_support::tiny_config(10);
  const SplitDataset d = build_dataset(cfg.data);
  const LandmarkModel m(cfg.model, 3);
  const double a = validation_equivariance(m, d.val, 3, cfg.augment_landmark, 11);
  CHECK(a == validation_equivariance(m, d.val, 3, cfg.augment_landmark, 11));
  CHECK(validation_equivariance(m, d.val, 3, AugmentConfig::preset("identity"), 11) == doctest::Approx(0.0));
}

TEST_CASE("experiment config round trips and rejects unknown keys") {
  ExperimentConfig cfg = ExperimentConfig::desk_defaults();
  cfg.seed = 42;
  cfg.landmark.weights.diversity = 2.5;
  cfg.eval.sweep_sizes = {5, 0};
  const nlohmann::json j = cfg.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(config_hash(back.to_json()) == config_hash(j));
  CHECK(config_hash(j).size() == 16);

  nlohmann::json bad = j;
  bad["landmark"]["learning_rate"] = 1.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = j;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = j;
  bad["pretrain"]["epochs"] = -1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad).validate(), ConfigError);

  nlohmann::json other = j;
  other["seed"] = 43;
  CHECK(config_hash(other) != config_hash(j));
}

}  // TEST_SUITE
