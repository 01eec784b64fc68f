#include "lmk/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lmk/rng.hpp"

namespace lmk {

namespace {

Point direction(double angle) { return {std::cos(angle), std::sin(angle)}; }

double dot(Point a, Point b) { return a.row * b.row + a.col * b.col; }

double segment_distance(Point p, Point a, Point b) {
  const Point ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return distance(p, a + t * ab);
}

struct Rgb {
  double v[3];
};

Rgb random_color(Rng& rng, double lo, double hi) {
  return {{uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)}};
}

Rgb scaled(Rgb c, double s) { return {{c.v[0] * s, c.v[1] * s, c.v[2] * s}}; }

void blend(double* px, const Rgb& c, double alpha) {
  for (int ch = 0; ch < 3; ++ch) px[ch] = (1.0 - alpha) * px[ch] + alpha * c.v[ch];
}

double coverage(double signed_distance) { return std::clamp(0.5 - signed_distance, 0.0, 1.0); }

}  // namespace

const std::vector<std::string>& figure_landmark_names() {
  static const std::vector<std::string> names{"head",        "left_shoulder", "right_shoulder", "left_elbow",
                                              "right_elbow", "left_wrist",    "right_wrist"};
  return names;
}

std::vector<Point> figure_landmarks(const FigurePose& pose) {
  const double s = pose.scale;
  const Point axis = direction(pose.tilt);
  const Point across{-axis.col, axis.row};
  std::vector<Point> pts(7);
  pts[0] = pose.torso_center - (s * kHeadOffset) * axis;
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    const Point shoulder = pose.torso_center - (s * kShoulderDrop) * axis + (sign * s * kShoulderHalfWidth) * across;
    const double upper = pose.tilt + sign * pose.shoulder_angle[side];
    const Point elbow = shoulder + (s * pose.upper_length[side]) * direction(upper);
    const double fore = upper + sign * pose.elbow_angle[side];
    const Point wrist = elbow + (s * pose.fore_length[side]) * direction(fore);
    pts[1 + side] = shoulder;
    pts[3 + side] = elbow;
    pts[5 + side] = wrist;
  }
  return pts;
}

FigurePose sample_figure_pose(const SyntheticSpec& spec, std::size_t index) {
  Rng rng(derive_seed(spec.seed, index, 1));
  const double unit = std::min(spec.height, spec.width) / 64.0;
  const double margin = 3.0 * unit;
  FigurePose pose;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    pose.scale = unit * uniform(rng, 0.85, 1.1);
    pose.torso_center = {0.5 * (spec.height - 1) + uniform(rng, 2.0, 8.0) * unit,
                         0.5 * (spec.width - 1) + uniform(rng, -5.0, 5.0) * unit};
    pose.tilt = uniform(rng, -0.3, 0.3);
    for (int side = 0; side < 2; ++side) {
      pose.shoulder_angle[side] = uniform(rng, 0.2, 2.6);
      pose.elbow_angle[side] = uniform(rng, -1.8, 1.8);
      pose.upper_length[side] = uniform(rng, 9.0, 12.0);
      pose.fore_length[side] = uniform(rng, 8.0, 11.0);
    }
    const auto pts = figure_landmarks(pose);
    const bool inside = std::all_of(pts.begin(), pts.end(), [&](Point p) {
      return p.row >= margin && p.row <= spec.height - 1 - margin && p.col >= margin &&
             p.col <= spec.width - 1 - margin;
    });
    if (inside) return pose;
  }
  // Arms hanging down always fit.
  pose.tilt = 0.0;
  pose.torso_center = {0.5 * (spec.height - 1) + 4.0 * unit, 0.5 * (spec.width - 1)};
  pose.scale = unit;
  pose.shoulder_angle = {0.3, 0.3};
  pose.elbow_angle = {0.0, 0.0};
  pose.upper_length = {10.0, 10.0};
  pose.fore_length = {9.0, 9.0};
  return pose;
}

AnnotatedExample render_figure(const SyntheticSpec& spec, std::size_t index) {
  const FigurePose pose = sample_figure_pose(spec, index);
  const auto pts = figure_landmarks(pose);
  Rng rng(derive_seed(spec.seed, index, 2));

  const Rgb background = random_color(rng, 0.1, 0.45);
  struct Grating {
    double freq, angle, phase, amp;
  };
  Grating gratings[2];
  for (auto& g : gratings) {
    g = {uniform(rng, 0.08, 0.4), uniform(rng, 0.0, 3.14159), uniform(rng, 0.0, 6.28318), uniform(rng, 0.03, 0.08)};
  }
  const Rgb torso = random_color(rng, 0.55, 0.95);
  const Rgb limb = random_color(rng, 0.55, 0.95);
  const Rgb head = random_color(rng, 0.55, 0.95);
  const Rgb hand = random_color(rng, 0.6, 1.0);
  const double noise = 0.02;

  const double s = pose.scale;
  const Point axis = direction(pose.tilt);
  const Point across{-axis.col, axis.row};
  const Point shoulders[2] = {pts[1], pts[2]}, elbows[2] = {pts[3], pts[4]}, wrists[2] = {pts[5], pts[6]};

  AnnotatedExample ex;
  char id[32];
  std::snprintf(id, sizeof id, "fig_%06zu", index);
  ex.id = id;
  ex.image = Image(3, spec.height, spec.width);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const Point p{static_cast<double>(r), static_cast<double>(c)};
      double px[3];
      double texture = 0.0;
      for (const auto& g : gratings) {
        texture += g.amp * std::sin(g.freq * (p.row * std::cos(g.angle) + p.col * std::sin(g.angle)) + g.phase);
      }
      for (int ch = 0; ch < 3; ++ch) px[ch] = background.v[ch] + texture + noise * normal01(rng);

      const Point q = p - pose.torso_center;
      const double u = dot(q, axis) / (s * kTorsoHalfLength), v = dot(q, across) / (s * kTorsoHalfWidth);
      const double torso_sd = (std::sqrt(u * u + v * v) - 1.0) * s * kTorsoHalfWidth;
      blend(px, torso, coverage(torso_sd));
      for (int side = 0; side < 2; ++side) {
        const Rgb shade = side == 0 ? limb : scaled(limb, 0.7);
        blend(px, shade, coverage(segment_distance(p, shoulders[side], elbows[side]) - s * kLimbRadius));
        blend(px, scaled(shade, 0.85), coverage(segment_distance(p, elbows[side], wrists[side]) - s * kLimbRadius));
        blend(px, hand, coverage(distance(p, wrists[side]) - s * kHandRadius));
      }
      blend(px, head, coverage(distance(p, pts[0]) - s * kHeadRadius));
      for (int ch = 0; ch < 3; ++ch) {
        ex.image.at(ch, r, c) = static_cast<float>(std::lround(std::clamp(px[ch], 0.0, 1.0) * 255.0)) / 255.0f;
      }
    }
  }
  ex.landmarks = LandmarkSet(pts);
  return ex;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  Dataset out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(render_figure(spec, i));
  return out;
}

}  // namespace lmk
