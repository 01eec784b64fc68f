#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lmk/geometry.hpp"
#include "lmk/readout.hpp"
#include "lmk/tensor.hpp"

namespace lmk {

struct ModelConfig {
  int in_channels = 3;
  int feature_dim = 64;  // D
  int landmarks = 10;    // K
  int depth = 4;         // conv-maxpool blocks in the encoder
  int base_width = 32;   // encoder widths base_width * 2^i, scaled by width_multiplier
  double width_multiplier = 1.0;
  int head_width = 32;   // T's hidden width (also scaled by width_multiplier)

  std::vector<int> encoder_widths() const;
  int scaled_head_width() const;
  void validate() const;
  /// Throws ConfigError unless H and W are divisible by 2^depth.
  void validate_input(int height, int width) const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using Gradients = std::vector<Tensor>;

/// Named, ordered parameter tensors.
class ParameterStore {
 public:
  std::size_t add(std::string name, std::vector<int> shape);

  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return values_.size(); }

  Gradients zeros_like() const;
  std::size_t parameter_count() const;
  /// FNV-1a over names, shapes and raw bytes.
  std::uint64_t checksum() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

struct ConvSlot {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

/// Hourglass encoder-decoder F: image (C,H,W) -> features (D,H,W).
/// Encoder: `depth` blocks of [conv3x3-ReLU-conv3x3-ReLU, maxpool2].
/// Decoder: mirrored [upsample2, concat skip, conv3x3-ReLU-conv3x3-ReLU], then a
/// linear 1x1 projection to D channels.
class FeatureExtractor {
 public:
  struct Tape {
    std::vector<Tensor> enc_in, enc_a, enc_out;
    std::vector<std::vector<std::int32_t>> pool_index;
    std::vector<Tensor> dec_cat, dec_a, dec_out;
  };

  FeatureExtractor(const ModelConfig& cfg, std::uint64_t init_seed);

  FeatureMap forward(const Image& x, Tape* tape = nullptr) const;
  /// Accumulates parameter gradients; returns dL/dx only when `want_input_grad`.
  Tensor backward(const Tape& tape, const FeatureMap& grad_out, Gradients& grads,
                  bool want_input_grad = false) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

 private:
  ModelConfig cfg_;
  ParameterStore params_;
  std::vector<ConvSlot> enc_a_, enc_b_, dec_a_, dec_b_;
  ConvSlot out_;
};

/// Fully convolutional landmark head T: features (D,H,W) -> K heatmaps (K,H,W).
/// conv1x1-ReLU, residual conv3x3-ReLU, conv3x3; all at full resolution.
class LandmarkHead {
 public:
  struct Tape {
    Tensor input, a1, r2, a2;
  };
  struct Activations {
    Tensor layer2, layer3, heatmaps;
  };

  LandmarkHead(const ModelConfig& cfg, std::uint64_t init_seed);

  Tensor forward(const FeatureMap& f, Tape* tape = nullptr) const;
  Activations forward_taps(const FeatureMap& f) const;
  Tensor backward(const Tape& tape, const Tensor& grad_heatmaps, Gradients& grads,
                  bool want_input_grad) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

 private:
  ModelConfig cfg_;
  ParameterStore params_;
  ConvSlot c1_, c2_, c3_;
};

/// Probe points inside T∘F: layer1 = F output, layer2..3 = T's hidden
/// activations, layer4 = heatmaps.
enum class LayerTap { Layer1 = 1, Layer2, Layer3, Layer4 };
LayerTap parse_layer_tap(std::string_view name);
std::string layer_tap_name(LayerTap tap);

/// The complete landmark extractor T∘F.
struct LandmarkModel {
  FeatureExtractor features;
  LandmarkHead head;

  LandmarkModel(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return features.config(); }
  Tensor heatmaps(const Image& x) const;
  /// Soft-argmax landmarks of every heatmap.
  LandmarkSet landmarks(const Image& x) const;
  Tensor tap(const Image& x, LayerTap which) const;
};

std::vector<Point> soft_argmax_all(const Tensor& heatmaps);

}  // namespace lmk
