#include "lmk/netarch.hpp"

#include <cmath>
#include <cstring>

#include "lmk/errors.hpp"
#include "lmk/layers.hpp"
#include "lmk/rng.hpp"

namespace lmk {

// ---------------------------------------------------------------------------
// ModelConfig

std::vector<int> ModelConfig::encoder_widths() const {
  std::vector<int> w;
  for (int i = 0; i < depth; ++i) {
    w.push_back(std::max(1, static_cast<int>(std::lround(base_width * std::ldexp(1.0, i) * width_multiplier))));
  }
  return w;
}

int ModelConfig::scaled_head_width() const {
  return std::max(1, static_cast<int>(std::lround(head_width * width_multiplier)));
}

void ModelConfig::validate() const {
  if (in_channels < 1 || feature_dim < 1 || landmarks < 1 || depth < 1 || depth > 6 ||
      base_width < 1 || !(width_multiplier > 0.0) || head_width < 1) {
    throw ConfigError("invalid model configuration " + to_json().dump());
  }
}

void ModelConfig::validate_input(int height, int width) const {
  const int q = 1 << depth;
  if (height % q != 0 || width % q != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by " + std::to_string(q) + " (2^depth)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"in_channels", in_channels},     {"feature_dim", feature_dim}, {"landmarks", landmarks},
          {"depth", depth},                 {"base_width", base_width},   {"width_multiplier", width_multiplier},
          {"head_width", head_width}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.landmarks = j.value("landmarks", c.landmarks);
  c.depth = j.value("depth", c.depth);
  c.base_width = j.value("base_width", c.base_width);
  c.width_multiplier = j.value("width_multiplier", c.width_multiplier);
  c.head_width = j.value("head_width", c.head_width);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(std::string name, std::vector<int> shape) {
  names_.push_back(std::move(name));
  values_.emplace_back(std::move(shape));
  return values_.size() - 1;
}

Gradients ParameterStore::zeros_like() const {
  Gradients g;
  g.reserve(values_.size());
  for (const auto& v : values_) g.emplace_back(v.shape());
  return g;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = fnv1a("");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    h = fnv1a(names_[i], h);
    h = fnv1a(shape_string(values_[i].shape()), h);
    h = fnv1a({reinterpret_cast<const char*>(values_[i].data()), values_[i].size() * sizeof(float)}, h);
  }
  return h;
}

namespace {

ConvSlot add_conv(ParameterStore& store, const std::string& name, int in, int out, int k, double gain,
                  Rng& rng) {
  ConvSlot s;
  s.weight = store.add(name + ".weight", {out, in, k, k});
  s.bias = store.add(name + ".bias", {out});
  const double std_dev = std::sqrt(gain / (static_cast<double>(in) * k * k));
  for (float& v : store.values()[s.weight].values()) v = static_cast<float>(std_dev * normal01(rng));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in) * k * k);
  for (float& v : store.values()[s.bias].values()) v = static_cast<float>(uniform(rng, -bound, bound));
  return s;
}

constexpr double kReluGain = 2.0;
constexpr double kLinearGain = 1.0;

Tensor conv(const ParameterStore& p, ConvSlot s, const Tensor& x) {
  return layers::conv2d(x, p.values()[s.weight], p.values()[s.bias]);
}

Tensor conv_back(const ParameterStore& p, ConvSlot s, const Tensor& x, const Tensor& g, Gradients& grads,
                 bool want_input) {
  Tensor gx;
  layers::conv2d_backward(x, p.values()[s.weight], g, grads[s.weight], grads[s.bias],
                          want_input ? &gx : nullptr);
  return gx;
}

void check_grads(const ParameterStore& p, const Gradients& g) {
  if (g.size() != p.size()) throw DimensionError("gradient buffer does not match parameter store");
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, 0xF));
  const auto w = cfg_.encoder_widths();
  for (int i = 0; i < cfg_.depth; ++i) {
    const int in = i == 0 ? cfg_.in_channels : w[i - 1];
    const std::string n = "F.enc" + std::to_string(i);
    enc_a_.push_back(add_conv(params_, n + ".conv_a", in, w[i], 3, kReluGain, rng));
    enc_b_.push_back(add_conv(params_, n + ".conv_b", w[i], w[i], 3, kReluGain, rng));
  }
  dec_a_.resize(cfg_.depth);
  dec_b_.resize(cfg_.depth);
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    const int up = i == cfg_.depth - 1 ? w[i] : w[i + 1];
    const std::string n = "F.dec" + std::to_string(i);
    dec_a_[i] = add_conv(params_, n + ".conv_a", up + w[i], w[i], 3, kReluGain, rng);
    dec_b_[i] = add_conv(params_, n + ".conv_b", w[i], w[i], 3, kReluGain, rng);
  }
  out_ = add_conv(params_, "F.out", w[0], cfg_.feature_dim, 1, kLinearGain, rng);
}

FeatureMap FeatureExtractor::forward(const Image& x, Tape* tape) const {
  if (x.rank() != 3 || x.channels() != cfg_.in_channels) {
    throw DimensionError("feature extractor expects " + std::to_string(cfg_.in_channels) +
                         "-channel images, got " + shape_string(x.shape()));
  }
  cfg_.validate_input(x.height(), x.width());
  const int depth = cfg_.depth;
  if (tape) {
    *tape = Tape{};
    tape->pool_index.resize(depth);
    tape->dec_cat.resize(depth);
    tape->dec_a.resize(depth);
    tape->dec_out.resize(depth);
  }
  std::vector<Tensor> skips(depth);
  Tensor h = x;
  for (int i = 0; i < depth; ++i) {
    Tensor a = conv(params_, enc_a_[i], h);
    layers::relu_inplace(a);
    Tensor s = conv(params_, enc_b_[i], a);
    layers::relu_inplace(s);
    std::vector<std::int32_t> idx;
    Tensor pooled = layers::maxpool2(s, idx);
    if (tape) {
      tape->enc_in.push_back(std::move(h));
      tape->enc_a.push_back(std::move(a));
      tape->enc_out.push_back(s);
      tape->pool_index[i] = std::move(idx);
    }
    skips[i] = std::move(s);
    h = std::move(pooled);
  }
  for (int i = depth - 1; i >= 0; --i) {
    Tensor cat = layers::concat_channels(layers::upsample2(h), skips[i]);
    Tensor a = conv(params_, dec_a_[i], cat);
    layers::relu_inplace(a);
    Tensor o = conv(params_, dec_b_[i], a);
    layers::relu_inplace(o);
    if (tape) {
      tape->dec_cat[i] = std::move(cat);
      tape->dec_a[i] = std::move(a);
      tape->dec_out[i] = o;
    }
    h = std::move(o);
  }
  return conv(params_, out_, h);
}

Tensor FeatureExtractor::backward(const Tape& tape, const FeatureMap& grad_out, Gradients& grads,
                                  bool want_input_grad) const {
  check_grads(params_, grads);
  const int depth = cfg_.depth;
  if (static_cast<int>(tape.enc_in.size()) != depth) throw ConfigError("backward called with an empty tape");
  const auto w = cfg_.encoder_widths();

  Tensor g = conv_back(params_, out_, tape.dec_out[0], grad_out, grads, true);
  std::vector<Tensor> skip_grad(depth);
  for (int i = 0; i < depth; ++i) {
    layers::relu_backward(tape.dec_out[i], g);
    Tensor ga = conv_back(params_, dec_b_[i], tape.dec_a[i], g, grads, true);
    layers::relu_backward(tape.dec_a[i], ga);
    Tensor gcat = conv_back(params_, dec_a_[i], tape.dec_cat[i], ga, grads, true);
    Tensor gu;
    layers::split_channels(gcat, gcat.channels() - w[i], gu, skip_grad[i]);
    g = layers::upsample2_backward(gu);
  }
  for (int i = depth - 1; i >= 0; --i) {
    Tensor gs = layers::maxpool2_backward(g, tape.pool_index[i], tape.enc_out[i].shape());
    gs.add_scaled(skip_grad[i]);
    layers::relu_backward(tape.enc_out[i], gs);
    Tensor ga = conv_back(params_, enc_b_[i], tape.enc_a[i], gs, grads, true);
    layers::relu_backward(tape.enc_a[i], ga);
    g = conv_back(params_, enc_a_[i], tape.enc_in[i], ga, grads, i > 0 || want_input_grad);
  }
  return want_input_grad ? g : Tensor{};
}

// ---------------------------------------------------------------------------
// LandmarkHead

LandmarkHead::LandmarkHead(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, 0x7));
  const int hw = cfg_.scaled_head_width();
  c1_ = add_conv(params_, "T.conv1", cfg_.feature_dim, hw, 1, kReluGain, rng);
  c2_ = add_conv(params_, "T.conv2", hw, hw, 3, kReluGain, rng);
  c3_ = add_conv(params_, "T.conv3", hw, cfg_.landmarks, 3, kLinearGain, rng);
}

Tensor LandmarkHead::forward(const FeatureMap& f, Tape* tape) const {
  if (f.rank() != 3 || f.channels() != cfg_.feature_dim) {
    throw DimensionError("landmark head expects " + std::to_string(cfg_.feature_dim) +
                         "-channel features, got " + shape_string(f.shape()));
  }
  Tensor a1 = conv(params_, c1_, f);
  layers::relu_inplace(a1);
  Tensor r2 = conv(params_, c2_, a1);
  layers::relu_inplace(r2);
  Tensor a2 = r2;
  a2.add_scaled(a1);
  Tensor h = conv(params_, c3_, a2);
  if (tape) *tape = Tape{f, std::move(a1), std::move(r2), std::move(a2)};
  return h;
}

LandmarkHead::Activations LandmarkHead::forward_taps(const FeatureMap& f) const {
  Tape t;
  Tensor h = forward(f, &t);
  return {std::move(t.a1), std::move(t.a2), std::move(h)};
}

Tensor LandmarkHead::backward(const Tape& tape, const Tensor& grad_heatmaps, Gradients& grads,
                              bool want_input_grad) const {
  check_grads(params_, grads);
  Tensor g2 = conv_back(params_, c3_, tape.a2, grad_heatmaps, grads, true);
  Tensor g1 = g2;  // residual branch
  layers::relu_backward(tape.r2, g2);
  g1.add_scaled(conv_back(params_, c2_, tape.a1, g2, grads, true));
  layers::relu_backward(tape.a1, g1);
  Tensor gf = conv_back(params_, c1_, tape.input, g1, grads, want_input_grad);
  return gf;
}

// ---------------------------------------------------------------------------

LayerTap parse_layer_tap(std::string_view name) {
  if (name == "layer1") return LayerTap::Layer1;
  if (name == "layer2") return LayerTap::Layer2;
  if (name == "layer3") return LayerTap::Layer3;
  if (name == "layer4") return LayerTap::Layer4;
  throw ConfigError("unknown layer tap '" + std::string(name) + "'; valid taps: layer1, layer2, layer3, layer4");
}

std::string layer_tap_name(LayerTap tap) { return "layer" + std::to_string(static_cast<int>(tap)); }

LandmarkModel::LandmarkModel(const ModelConfig& cfg, std::uint64_t init_seed)
    : features(cfg, init_seed), head(cfg, init_seed) {}

Tensor LandmarkModel::heatmaps(const Image& x) const { return head.forward(features.forward(x)); }

std::vector<Point> soft_argmax_all(const Tensor& heatmaps) {
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(heatmaps.channels()));
  for (int k = 0; k < heatmaps.channels(); ++k) pts.push_back(spatial_soft_argmax(heatmap_from_channel(heatmaps, k)));
  return pts;
}

LandmarkSet LandmarkModel::landmarks(const Image& x) const { return LandmarkSet(soft_argmax_all(heatmaps(x))); }

Tensor LandmarkModel::tap(const Image& x, LayerTap which) const {
  Tensor f = features.forward(x);
  if (which == LayerTap::Layer1) return f;
  auto acts = head.forward_taps(f);
  switch (which) {
    case LayerTap::Layer2: return std::move(acts.layer2);
    case LayerTap::Layer3: return std::move(acts.layer3);
    default: return std::move(acts.heatmaps);
  }
}

}  // namespace lmk
