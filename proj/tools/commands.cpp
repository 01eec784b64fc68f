#include "commands.hpp"

#include <fstream>
#include <iostream>

#include "lmk/checkpoint.hpp"
#include "lmk/data.hpp"
#include "lmk/errors.hpp"
#include "lmk/evalharness.hpp"
#include "lmk/metrics.hpp"
#include "lmk/report.hpp"
#include "lmk/rng.hpp"
#include "lmk/training.hpp"

namespace lmk::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kCurveStream = 0xACC;
constexpr std::uint64_t kSweepStream = 0x5EE9;

SplitDataset load_data(const Options& opt, const ExperimentConfig& cfg) {
  if (!opt.data_dir.empty()) {
    return load_directory_dataset(opt.data_dir, cfg.data.layout, cfg.data.height, cfg.data.width);
  }
  return build_dataset(cfg.data);
}

LandmarkModel load_model(const fs::path& path, bool allow_features_only = false) {
  const Checkpoint ckpt = load_checkpoint(path);
  LandmarkModel model(ckpt.config, 0);
  restore_parameters(ckpt, model.features.parameters());
  if (ckpt.has_prefix("T.")) {
    restore_parameters(ckpt, model.head.parameters());
  } else if (!allow_features_only) {
    throw ConfigError(path.string() + " holds only a feature extractor; a full landmark model is required");
  }
  return model;
}

void write_log(const fs::path& path, const TrainReport& rep) {
  std::ofstream(path, std::ios::trunc);
  for (const auto& e : rep.epochs) append_jsonl(path, e.to_json());
}

std::pair<int, int> eye_indices(const ExperimentConfig& cfg) {
  if (cfg.eval.eye_indices.size() == 2) return {cfg.eval.eye_indices[0], cfg.eval.eye_indices[1]};
  return layout_eye_indices(cfg.data.layout);
}

Dataset head_of(const Dataset& data, std::size_t count) {
  return Dataset(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(std::min(count, data.size())));
}

void require_nonempty(const Dataset& d, const char* what) {
  if (d.empty()) throw DataError(std::string("the ") + what + " split is empty");
}

DeformSampler curve_sampler(const ExperimentConfig& cfg, const DomainSpec& domain) {
  return [aug = cfg.augment_landmark, domain, seed = derive_seed(cfg.seed, kCurveStream)](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    return sample_deformation(aug, domain, rng);
  };
}

std::vector<Point> curve_targets(const Dataset& data, const DeformSampler& deform) {
  std::vector<Point> targets;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LandmarkSet t = transport_landmarks(deform(i), data[i].landmarks, domain_of(data[i].image));
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (t.valid[j] && data[i].landmarks.valid[j]) targets.push_back(t.points[j]);
    }
  }
  return targets;
}

PlotSeries series_of(const std::string& label, const AccuracyCurve& c, bool dashed = false) {
  return {label, c.thresholds, c.values, dashed};
}

void print_epoch(const EpochLog& e) {
  std::cerr << e.stage << " epoch " << e.epoch << " lr " << e.lr << " loss " << e.total;
  if (std::isfinite(e.val_equivariance)) std::cerr << " val_eqv " << e.val_equivariance;
  std::cerr << " (" << e.wall_seconds << " s)\n";
}

}  // namespace

ExperimentConfig resolve_config(const Options& opt) {
  ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig::desk_defaults() : load_config(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  const bool pre = opt.command == "pretrain" || opt.command == "ablate";
  const bool lmk = opt.command == "train" || opt.command == "e2e" || opt.command == "ablate";
  if (opt.epochs) {
    if (pre) cfg.pretrain.epochs = *opt.epochs;
    if (lmk) cfg.landmark.epochs = *opt.epochs;
  }
  if (opt.lr) {
    if (pre) cfg.pretrain.lr = *opt.lr;
    if (lmk) cfg.landmark.lr = *opt.lr;
  }
  if (opt.k_landmarks) cfg.model.landmarks = *opt.k_landmarks;
  cfg.validate();
  return cfg;
}

int cmd_synth(const Options& opt, const ExperimentConfig& cfg) {
  DatasetSpec spec = cfg.data;
  spec.source = DatasetSpec::Source::Synthetic;
  if (opt.n_given) {
    spec.val = opt.n / 8;
    spec.test = opt.n / 8;
    spec.train = opt.n - spec.val - spec.test;
  }
  if (opt.seed) spec.seed = *opt.seed;
  const SplitDataset data = build_dataset(spec);
  const fs::path root = opt.out / "dataset";
  fs::remove_all(root);
  export_dataset(root, data,
                 {{"generator", "synthetic-articulated-figures"}, {"spec", spec.to_json()},
                  {"landmarks", data.names}, {"count", spec.train + spec.val + spec.test}});
  std::cout << "wrote " << spec.train + spec.val + spec.test << " examples to " << root.string() << "\n";
  return 0;
}

int cmd_pretrain(const Options& opt, const ExperimentConfig& cfg) {
  const SplitDataset data = load_data(opt, cfg);
  require_nonempty(data.train, "train");
  TrainReport rep;
  const FeatureExtractor f = pretrain_features(cfg, data.train, &rep, print_epoch);
  save_checkpoint(opt.out / "features.ckpt",
                  make_checkpoint(f, {{"stage", "pretrain"}, {"seed", cfg.seed}, {"config_hash", rep.config_hash}}));
  write_log(opt.out / "pretrain_log.jsonl", rep);
  write_text(opt.out / "pretrain_report.json", rep.to_json(false).dump(2) + "\n");
  std::cout << "features checkpoint: " << (opt.out / "features.ckpt").string() << "\n";
  return 0;
}

int cmd_train(const Options& opt, const ExperimentConfig& cfg) {
  if (opt.features.empty()) throw UsageError("train requires --features <Step-1 checkpoint>");
  const Checkpoint features = load_checkpoint(opt.features);
  const SplitDataset data = load_data(opt, cfg);
  require_nonempty(data.train, "train");
  TrainReport rep;
  const LandmarkModel m = train_landmarks(cfg, data.train, data.val, features, &rep, print_epoch);
  save_checkpoint(opt.out / "model.ckpt",
                  make_checkpoint(m, {{"stage", "landmark"}, {"seed", cfg.seed}, {"config_hash", rep.config_hash}}));
  write_log(opt.out / "landmark_log.jsonl", rep);
  write_text(opt.out / "landmark_report.json", rep.to_json(false).dump(2) + "\n");
  std::cout << "model checkpoint: " << (opt.out / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_e2e(const Options& opt, const ExperimentConfig& cfg) {
  const SplitDataset data = load_data(opt, cfg);
  require_nonempty(data.train, "train");
  TrainReport rep;
  const LandmarkModel m = train_end_to_end(cfg, data.train, data.val, &rep, print_epoch);
  save_checkpoint(opt.out / "model.ckpt",
                  make_checkpoint(m, {{"stage", "end2end"}, {"seed", cfg.seed}, {"config_hash", rep.config_hash}}));
  write_log(opt.out / "e2e_log.jsonl", rep);
  write_text(opt.out / "e2e_report.json", rep.to_json(false).dump(2) + "\n");
  std::cout << "model checkpoint: " << (opt.out / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_acc_curve(const Options& opt, const ExperimentConfig& cfg) {
  if (opt.checkpoint.empty()) throw UsageError("acc-curve requires --checkpoint");
  const LayerTap tap = parse_layer_tap(opt.layer);
  const LandmarkModel model = load_model(opt.checkpoint, tap == LayerTap::Layer1);
  const SplitDataset data = load_data(opt, cfg);
  const Dataset test = head_of(data.test, cfg.eval.curve_images);
  require_nonempty(test, "test");
  const DomainSpec domain = domain_of(test[0].image);
  const DeformSampler deform = curve_sampler(cfg, domain);
  const AccuracyCurve curve = accuracy_curve(test, tap_features(model, tap), deform, cfg.eval.thresholds, cfg.threads);
  const AccuracyCurve random =
      random_baseline_curve(curve_targets(test, deform), domain, cfg.eval.thresholds, derive_seed(cfg.seed, kCurveStream));

  const std::string name = layer_tap_name(tap);
  const std::string hash = config_hash(cfg.to_json());
  write_text(opt.out / ("acc_curve_" + name + ".txt"),
             "# config_hash " + hash + " seed " + std::to_string(cfg.seed) + " tap " + name + "\n" + curve.to_table());
  write_text(opt.out / ("acc_curve_" + name + ".json"),
             nlohmann::json{{"config_hash", hash}, {"seed", cfg.seed}, {"tap", name}, {"curve", curve.to_json()},
                            {"random_baseline", random.to_json()}}
                     .dump(2) +
                 "\n");
  write_text(opt.out / ("acc_curve_" + name + ".svg"),
             svg_line_plot("Acc(d), " + name, "distance d (px)", "Acc(d)",
                           {series_of(name, curve), series_of("random", random, true)}));
  std::cout << curve.to_table();
  return 0;
}

int cmd_eval(const Options& opt, const ExperimentConfig& cfg) {
  if (opt.checkpoint.empty()) throw UsageError("eval requires --checkpoint");
  const LandmarkModel model = load_model(opt.checkpoint);
  const SplitDataset data = load_data(opt, cfg);
  const Dataset& fit_split = data.split(cfg.data.readout_split);
  require_nonempty(fit_split, cfg.data.readout_split.c_str());
  require_nonempty(data.test, "test");

  EvalMetric metric;
  if (opt.metric == "pck") {
    metric.kind = EvalMetric::Kind::Pck;
    metric.threshold = cfg.eval.pck_threshold;
  } else if (opt.metric == "iod-mse") {
    metric.kind = EvalMetric::Kind::IodMse;
    metric.eyes = eye_indices(cfg);
  } else {
    throw UsageError("unknown --metric '" + opt.metric + "'; valid metrics: pck, iod-mse");
  }
  const ReadoutData pool = collect_readout_data(model, fit_split, cfg.threads);
  const ReadoutData test = collect_readout_data(model, data.test, cfg.threads);
  const RegressorFit fit = fit_readout(pool.unsup, pool.gt, cfg.eval.ridge_alpha, &pool.mask);
  const EvalReport full = evaluate_readout(fit, test, metric);

  EvalMetric error_metric;
  error_metric.kind = EvalMetric::Kind::IodMse;
  error_metric.eyes = eye_indices(cfg);
  std::vector<std::size_t> sizes;
  for (std::size_t s : cfg.eval.sweep_sizes) {
    if (s <= pool.size()) sizes.push_back(s);
  }
  const auto sweep = sample_efficiency_sweep(pool, test, sizes, cfg.eval.repeats, derive_seed(cfg.seed, kSweepStream),
                                             cfg.eval.ridge_alpha, error_metric);

  const std::string hash = config_hash(cfg.to_json());
  nlohmann::json sweep_json = nlohmann::json::array();
  for (const auto& r : sweep) sweep_json.push_back(r.to_json());
  write_text(opt.out / "eval_report.json",
             nlohmann::json{{"config_hash", hash},
                            {"seed", cfg.seed},
                            {"readout_split", cfg.data.readout_split},
                            {"result", full.to_json()},
                            {"sweep_metric", error_metric.name()},
                            {"sweep", sweep_json},
                            {"sweep_non_increasing", sweep_non_increasing(sweep)},
                            {"reference", reference_json()}}
                     .dump(2) +
                 "\n");
  std::string text = "# config_hash " + hash + " seed " + std::to_string(cfg.seed) + "\n";
  text += full.metric + " = " + std::to_string(full.value) + " on " + std::to_string(full.samples) + " test images\n\n";
  text += "Sample efficiency (" + error_metric.name() + ", lower is better)\n" + sweep_table(sweep, error_metric.name());
  text += "\n" + reference_table();
  write_text(opt.out / "eval_report.txt", text);
  std::cout << text;
  return 0;
}

int cmd_ablate(const Options& opt, const ExperimentConfig& cfg) {
  const SplitDataset data = load_data(opt, cfg);
  require_nonempty(data.test, "test");
  LandmarkModel two_step(cfg.model, cfg.seed), e2e(cfg.model, cfg.seed);
  if (!opt.two_step.empty() || !opt.end_to_end.empty()) {
    if (opt.two_step.empty() || opt.end_to_end.empty()) {
      throw UsageError("ablate needs both --two-step and --e2e checkpoints, or neither");
    }
    two_step = load_model(opt.two_step);
    e2e = load_model(opt.end_to_end);
  } else {
    require_nonempty(data.train, "train");
    TrainReport pre, lm, ee;
    const FeatureExtractor f = pretrain_features(cfg, data.train, &pre, print_epoch);
    two_step = train_landmarks(cfg, data.train, data.val, make_checkpoint(f), &lm, print_epoch);
    e2e = train_end_to_end(cfg, data.train, data.val, &ee, print_epoch);
    save_checkpoint(opt.out / "two_step.ckpt", make_checkpoint(two_step, {{"stage", "landmark"}, {"seed", cfg.seed}}));
    save_checkpoint(opt.out / "end_to_end.ckpt", make_checkpoint(e2e, {{"stage", "end2end"}, {"seed", cfg.seed}}));
    write_log(opt.out / "pretrain_log.jsonl", pre);
    write_log(opt.out / "landmark_log.jsonl", lm);
    write_log(opt.out / "e2e_log.jsonl", ee);
  }
  const Dataset& fit_split = data.split(cfg.data.readout_split);
  const AblationReport rep = ablation_report(e2e, two_step, fit_split, data.test, data.names, cfg.eval.ridge_alpha,
                                             cfg.eval.pck_threshold, cfg.eval.thresholds, cfg.threads);

  const Dataset curve_set = head_of(data.test, cfg.eval.curve_images);
  const DeformSampler deform = curve_sampler(cfg, domain_of(curve_set[0].image));
  const AccuracyCurve l1_e2e =
      accuracy_curve(curve_set, tap_features(e2e, LayerTap::Layer1), deform, cfg.eval.thresholds, cfg.threads);
  const AccuracyCurve l1_two =
      accuracy_curve(curve_set, tap_features(two_step, LayerTap::Layer1), deform, cfg.eval.thresholds, cfg.threads);

  const std::string hash = config_hash(cfg.to_json());
  write_text(opt.out / "ablation.json",
             nlohmann::json{{"config_hash", hash},
                            {"seed", cfg.seed},
                            {"ablation", rep.to_json()},
                            {"layer1_curves", {{"End-to-end", l1_e2e.to_json()}, {"Two-step", l1_two.to_json()}}},
                            {"reference", reference_json()}}
                     .dump(2) +
                 "\n");
  std::string text = "# config_hash " + hash + " seed " + std::to_string(cfg.seed) + "\n" + rep.to_table();
  text += "\nLayer-1 feature Acc(d)\nEnd-to-end\n" + l1_e2e.to_table() + "Two-step\n" + l1_two.to_table();
  text += "\n" + reference_table();
  write_text(opt.out / "ablation.txt", text);
  std::vector<PlotSeries> final_series, layer_series;
  for (const auto& arm : rep.arms) final_series.push_back(series_of(arm.name, arm.curve));
  write_text(opt.out / "ablation_final_curves.svg",
             svg_line_plot("Acc(d) of final regressed landmarks", "distance d (px)", "Acc(d)", final_series));
  write_text(opt.out / "ablation_layer1_curves.svg",
             svg_line_plot("Layer-1 feature Acc(d)", "distance d (px)", "Acc(d)",
                           {series_of("End-to-end", l1_e2e), series_of("Two-step", l1_two)}));
  std::cout << text;
  return 0;
}

}  // namespace lmk::cli
