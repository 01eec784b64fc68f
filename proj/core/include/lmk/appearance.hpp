#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "lmk/tensor.hpp"

namespace lmk {

/// One pixel-wise appearance change. Never moves a pixel.
struct AppearanceOp {
  enum class Kind { Noise, ScaleShift, Contrast };
  Kind kind = Kind::ScaleShift;
  double a = 1.0;  // Noise: std-dev.  ScaleShift: scale.  Contrast: factor.
  double b = 0.0;  // ScaleShift: shift.
  std::uint64_t seed = 0;  // Noise only.

  static AppearanceOp noise(double stddev, std::uint64_t seed) { return {Kind::Noise, stddev, 0.0, seed}; }
  static AppearanceOp scale_shift(double scale, double shift) { return {Kind::ScaleShift, scale, shift, 0}; }
  /// Per-channel (x - mean) * factor + mean.
  static AppearanceOp contrast(double factor) { return {Kind::Contrast, factor, 0.0, 0}; }
};

/// Appearance map r: a sequence of pixel-wise ops applied in order.
struct AppearanceMap {
  std::vector<AppearanceOp> ops;

  nlohmann::json to_json() const;
  static AppearanceMap from_json(const nlohmann::json& j);
};

Image apply_appearance(const AppearanceMap& r, const Image& x);

}  // namespace lmk
