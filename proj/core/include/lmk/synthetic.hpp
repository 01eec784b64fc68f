#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lmk/example.hpp"

namespace lmk {

/// Pose of one articulated figure. Lengths are in units of the 64-pixel
/// reference frame and multiplied by `scale`. Angles are radians; the tilt is
/// measured from the +row (downward) axis towards +col, arm angles are
/// relative to the parent segment with positive values turning outward.
struct FigurePose {
  Point torso_center;
  double scale = 1.0;
  double tilt = 0.0;                        // torso rotation
  std::array<double, 2> shoulder_angle{};   // upper-arm direction relative to the torso, [left, right]
  std::array<double, 2> elbow_angle{};      // forearm bend relative to the upper arm
  std::array<double, 2> upper_length{};     // reference units
  std::array<double, 2> fore_length{};
};

/// Fixed body proportions in reference units.
inline constexpr double kHeadOffset = 17.0;       // torso centre -> head centre, along the torso axis
inline constexpr double kShoulderDrop = 9.0;      // torso centre -> shoulder line
inline constexpr double kShoulderHalfWidth = 8.0;
inline constexpr double kTorsoHalfLength = 11.0;
inline constexpr double kTorsoHalfWidth = 8.5;
inline constexpr double kHeadRadius = 5.5;
inline constexpr double kLimbRadius = 2.2;
inline constexpr double kHandRadius = 2.6;

/// Landmark names in schema order.
const std::vector<std::string>& figure_landmark_names();

/// Forward kinematics: head, left/right shoulder, left/right elbow, left/right wrist.
std::vector<Point> figure_landmarks(const FigurePose& pose);

struct SyntheticSpec {
  int height = 64;
  int width = 64;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

/// Pose drawn for example `index`; pure function of (seed, index, resolution).
FigurePose sample_figure_pose(const SyntheticSpec& spec, std::size_t index);

/// Renders one figure on a textured background. Pixel values are quantised to
/// k/255 so PNG export is lossless.
AnnotatedExample render_figure(const SyntheticSpec& spec, std::size_t index);

/// `count` examples with ids "fig_000000", ...
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace lmk
