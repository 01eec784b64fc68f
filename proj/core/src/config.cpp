#include "lmk/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>

#include "lmk/errors.hpp"
#include "lmk/metrics.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
  }
}

template <class T>
T get(const nlohmann::json& j, const char* key, T fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type: " + j.at(key).dump());
  }
}

}  // namespace

void StageConfig::validate(const std::string& section) const {
  auto fail = [&](const std::string& what) { throw ConfigError(section + ": " + what); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (locations < 1) fail("locations must be >= 1");
  if (weights.equivariance < 0 || weights.diversity < 0 || weights.variance < 0) fail("loss weights must be >= 0");
  if (weights.patch_size < 1) fail("patch_size must be >= 1");
  if (clip_norm < 0.0) fail("clip_norm must be >= 0");
  if (val_images < 0) fail("val_images must be >= 0");
}

nlohmann::json StageConfig::to_json() const {
  return {{"epochs", epochs},
          {"lr", lr},
          {"lr_decay", lr_decay},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"temperature", temperature},
          {"locations", locations},
          {"w_eqv", weights.equivariance},
          {"w_div", weights.diversity},
          {"w_var", weights.variance},
          {"patch_size", weights.patch_size},
          {"clip_norm", clip_norm},
          {"val_images", val_images}};
}

StageConfig StageConfig::from_json(const nlohmann::json& j, const std::string& section) {
  check_keys(j,
             {"epochs", "lr", "lr_decay", "weight_decay", "batch_size", "temperature", "locations", "w_eqv", "w_div",
              "w_var", "patch_size", "clip_norm", "val_images"},
             section);
  StageConfig s;
  s.epochs = get(j, "epochs", s.epochs, section);
  s.lr = get(j, "lr", s.lr, section);
  s.lr_decay = get(j, "lr_decay", s.lr_decay, section);
  s.weight_decay = get(j, "weight_decay", s.weight_decay, section);
  s.batch_size = get(j, "batch_size", s.batch_size, section);
  s.temperature = get(j, "temperature", s.temperature, section);
  s.locations = get(j, "locations", s.locations, section);
  s.weights.equivariance = get(j, "w_eqv", s.weights.equivariance, section);
  s.weights.diversity = get(j, "w_div", s.weights.diversity, section);
  s.weights.variance = get(j, "w_var", s.weights.variance, section);
  s.weights.patch_size = get(j, "patch_size", s.weights.patch_size, section);
  s.clip_norm = get(j, "clip_norm", s.clip_norm, section);
  s.val_images = get(j, "val_images", s.val_images, section);
  s.validate(section);
  return s;
}

nlohmann::json EvalConfig::to_json() const {
  return {{"thresholds", thresholds},     {"pck_threshold", pck_threshold}, {"ridge_alpha", ridge_alpha},
          {"sweep_sizes", sweep_sizes},   {"repeats", repeats},             {"curve_images", curve_images},
          {"eye_indices", eye_indices}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  const std::string section = "eval";
  check_keys(j, {"thresholds", "pck_threshold", "ridge_alpha", "sweep_sizes", "repeats", "curve_images", "eye_indices"},
             section);
  EvalConfig e;
  e.thresholds = get(j, "thresholds", default_thresholds(), section);
  e.pck_threshold = get(j, "pck_threshold", e.pck_threshold, section);
  e.ridge_alpha = get(j, "ridge_alpha", e.ridge_alpha, section);
  e.sweep_sizes = get(j, "sweep_sizes", e.sweep_sizes, section);
  e.repeats = get(j, "repeats", e.repeats, section);
  e.curve_images = get(j, "curve_images", e.curve_images, section);
  e.eye_indices = get(j, "eye_indices", e.eye_indices, section);
  if (e.thresholds.empty() || e.pck_threshold <= 0 || e.ridge_alpha < 0 || e.repeats < 1 ||
      (!e.eye_indices.empty() && e.eye_indices.size() != 2)) {
    throw ConfigError("eval section out of range: " + e.to_json().dump());
  }
  return e;
}

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig c;
  c.model.width_multiplier = 0.125;
  c.model.feature_dim = 64;
  c.model.landmarks = 10;
  c.data.val = 256;
  c.eval.thresholds = default_thresholds();
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  model.validate_input(data.height, data.width);
  data.validate();
  augment_pretrain.validate();
  augment_landmark.validate();
  pretrain.validate("pretrain");
  landmark.validate("landmark");
  if (data.height % landmark.weights.patch_size != 0 || data.width % landmark.weights.patch_size != 0) {
    throw ConfigError("landmark.patch_size must divide the image size");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"schema_version", kSchemaVersion},
          {"seed", seed},
          {"strict_determinism", strict_determinism},
          {"threads", threads},
          {"model", model.to_json()},
          {"data", data.to_json()},
          {"augment_pretrain", augment_pretrain.to_json()},
          {"augment_landmark", augment_landmark.to_json()},
          {"pretrain", pretrain.to_json()},
          {"landmark", landmark.to_json()},
          {"eval", eval.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"schema_version", "seed", "strict_determinism", "threads", "model", "data", "augment_pretrain",
              "augment_landmark", "pretrain", "landmark", "eval"},
             "top level");
  const int version = get(j, "schema_version", kSchemaVersion, "top level");
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  ExperimentConfig c = desk_defaults();
  c.seed = get(j, "seed", c.seed, "top level");
  c.strict_determinism = get(j, "strict_determinism", c.strict_determinism, "top level");
  c.threads = get(j, "threads", c.threads, "top level");
  try {
    if (j.contains("model")) {
      check_keys(j["model"],
                 {"in_channels", "feature_dim", "landmarks", "depth", "base_width", "width_multiplier", "head_width"},
                 "model");
      nlohmann::json m = c.model.to_json();
      m.update(j["model"]);
      c.model = ModelConfig::from_json(m);
    }
    if (j.contains("data")) {
      check_keys(j["data"], {"source", "height", "width", "train", "val", "test", "seed", "root", "layout", "readout_split"},
                 "data");
      nlohmann::json d = c.data.to_json();
      d.update(j["data"]);
      c.data = DatasetSpec::from_json(d);
    }
    for (const auto& [key, target, preset] :
         {std::tuple{"augment_pretrain", &c.augment_pretrain, "pretrain"},
          std::tuple{"augment_landmark", &c.augment_landmark, "landmark"}}) {
      if (!j.contains(key)) continue;
      check_keys(j[key],
                 {"preset", "rotation", "scale_jitter", "shear", "translation", "zoom", "elastic_magnitude",
                  "elastic_smoothness", "elastic_grid", "noise", "brightness", "contrast"},
                 key);
      nlohmann::json a = j[key];
      if (!a.contains("preset")) a["preset"] = preset;
      *target = AugmentConfig::from_json(a);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (j.contains("pretrain")) c.pretrain = StageConfig::from_json(j["pretrain"], "pretrain");
  if (j.contains("landmark")) c.landmark = StageConfig::from_json(j["landmark"], "landmark");
  if (j.contains("eval")) c.eval = EvalConfig::from_json(j["eval"]);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  return ExperimentConfig::from_json(j);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a(j.dump())); }

}  // namespace lmk
