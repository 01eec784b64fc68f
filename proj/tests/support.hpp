#pragma once

// Small fixtures shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmk/config.hpp"
#include "lmk/readout.hpp"
#include "lmk/rng.hpp"
#include "lmk/tensor.hpp"

namespace test_support {

inline lmk::Image random_image(int c, int h, int w, std::uint64_t seed) {
  lmk::Rng rng(seed);
  lmk::Image x(c, h, w);
  for (float& v : x.values()) v = static_cast<float>(lmk::uniform01(rng));
  return x;
}

/// Sum of a few broad Gaussian bumps; smooth at the pixel scale.
inline lmk::Image smooth_image(int h, int w, std::uint64_t seed) {
  lmk::Rng rng(seed);
  lmk::Image x(1, h, w);
  for (int b = 0; b < 6; ++b) {
    const double cr = lmk::uniform(rng, 0, h), cc = lmk::uniform(rng, 0, w);
    const double s = lmk::uniform(rng, 6.0, 12.0), a = lmk::uniform(rng, -1.0, 1.0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        x.at(0, r, c) += static_cast<float>(a * std::exp(-((r - cr) * (r - cr) + (c - cc) * (c - cc)) / (2 * s * s)));
      }
    }
  }
  return x;
}

inline double dynamic_range(const lmk::Image& x) {
  const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
  return static_cast<double>(*hi - *lo);
}

/// Mean |a - b| over pixels at least `margin` away from every border.
inline double interior_mae(const lmk::Image& a, const lmk::Image& b, int margin) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int ch = 0; ch < a.channels(); ++ch) {
    for (int r = margin; r < a.height() - margin; ++r) {
      for (int c = margin; c < a.width() - margin; ++c) {
        sum += std::abs(static_cast<double>(a.at(ch, r, c)) - b.at(ch, r, c));
        ++n;
      }
    }
  }
  return sum / static_cast<double>(n);
}

inline lmk::ScalarField random_field(int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  lmk::Rng rng(seed);
  lmk::ScalarField f(h, w);
  for (double& v : f.values) v = lmk::uniform(rng, lo, hi);
  return f;
}

/// A random strictly positive field normalised to sum one.
inline lmk::ProbMap random_probmap(int h, int w, std::uint64_t seed) {
  lmk::ScalarField f = random_field(h, w, seed, 0.05, 1.0);
  double s = 0.0;
  for (double v : f.values) s += v;
  for (double& v : f.values) v /= s;
  return f;
}

/// Tiny, fast configuration for training smoke tests.
inline lmk::ExperimentConfig tiny_config(std::uint64_t seed = 1) {
  lmk::ExperimentConfig cfg = lmk::ExperimentConfig::desk_defaults();
  cfg.seed = seed;
  cfg.model.width_multiplier = 0.125;
  cfg.model.feature_dim = 8;
  cfg.model.landmarks = 4;
  cfg.data.height = 32;
  cfg.data.width = 32;
  cfg.data.train = 8;
  cfg.data.val = 4;
  cfg.data.test = 4;
  cfg.data.seed = seed;
  for (auto* st : {&cfg.pretrain, &cfg.landmark}) {
    st->epochs = 1;
    st->batch_size = 2;
    st->locations = 4;
    st->val_images = 2;
  }
  cfg.eval.curve_images = 4;
  cfg.eval.sweep_sizes = {2, 0};
  cfg.eval.repeats = 2;
  return cfg;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("lmk_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace test_support
