#include "lmk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lmk/errors.hpp"
#include "lmk/parallel.hpp"
#include "lmk/readout.hpp"
#include "lmk/rng.hpp"

namespace lmk {

nlohmann::json AccuracyCurve::to_json() const {
  return {{"thresholds", thresholds}, {"values", values}, {"evaluated", evaluated}, {"excluded", excluded}};
}

std::string AccuracyCurve::to_table() const {
  std::ostringstream os;
  os << "# d acc n_evaluated n_excluded\n";
  os.precision(6);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    os << thresholds[i] << ' ' << std::fixed << values[i] << ' ' << evaluated << ' ' << excluded << '\n';
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int d = 2; d <= 20; d += 2) t.push_back(d);
  return t;
}

Point match_location(std::span<const double> reference, const FeatureMap& deformed) {
  const int d = deformed.channels();
  if (static_cast<int>(reference.size()) != d) {
    throw DimensionError("match_location: reference has " + std::to_string(reference.size()) +
                         " channels, feature map has " + std::to_string(d));
  }
  double ref_norm = 0.0;
  for (double v : reference) ref_norm += v * v;
  ref_norm = std::sqrt(ref_norm);
  if (ref_norm < 1e-8) throw NumericError("match_location: reference feature has zero norm");

  const std::size_t plane = deformed.plane_size();
  std::vector<double> dot(plane, 0.0), sq(plane, 0.0);
  for (int c = 0; c < d; ++c) {
    const float* ch = deformed.channel(c).data();
    const double rc = reference[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < plane; ++i) {
      dot[i] += rc * ch[i];
      sq[i] += static_cast<double>(ch[i]) * ch[i];
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double n = std::sqrt(sq[i]);
    if (n < 1e-8) continue;
    const double s = dot[i] / (n * ref_norm);
    if (s > best) {
      best = s;
      best_i = i;
    }
  }
  const auto w = static_cast<std::size_t>(deformed.width());
  return {static_cast<double>(best_i / w), static_cast<double>(best_i % w)};
}

AccuracyCurve curve_from_errors(std::span<const double> errors, std::size_t excluded,
                                std::span<const double> thresholds) {
  AccuracyCurve curve;
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  std::sort(curve.thresholds.begin(), curve.thresholds.end());
  curve.evaluated = errors.size();
  curve.excluded = excluded;
  for (double d : curve.thresholds) {
    std::size_t hits = 0;
    for (double e : errors) hits += e <= d ? 1 : 0;
    curve.values.push_back(errors.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(errors.size()));
  }
  return curve;
}

MatchErrors feature_match_errors(const Dataset& data, const FeatureFn& features, const DeformSampler& deform,
                                 unsigned threads) {
  struct PerExample {
    std::vector<double> errors;
    std::size_t excluded = 0;
  };
  std::vector<PerExample> slots(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const AnnotatedExample& ex = data[i];
    const DomainSpec domain = domain_of(ex.image);
    const CoordMap g = deform(i);
    const FeatureMap f = features(ex.image);
    const FeatureMap f_def = features(warp_image(g, ex.image));
    const LandmarkSet target = transport_landmarks(g, ex.landmarks, domain);
    PerExample& out = slots[i];
    for (std::size_t j = 0; j < ex.landmarks.size(); ++j) {
      if (!ex.landmarks.valid[j]) continue;
      if (!target.valid[j]) {
        ++out.excluded;
        continue;
      }
      const Point y = ex.landmarks.points[j];
      const Eigen::MatrixXd ref = sample_features_at(f, std::span<const Point>(&y, 1));
      const Point hit = match_location(std::span<const double>(ref.data(), static_cast<std::size_t>(ref.size())), f_def);
      out.errors.push_back(distance(hit, target.points[j]));
    }
  });
  MatchErrors all;
  for (auto& s : slots) {
    all.errors.insert(all.errors.end(), s.errors.begin(), s.errors.end());
    all.excluded += s.excluded;
  }
  return all;
}

AccuracyCurve accuracy_curve(const Dataset& data, const FeatureFn& features, const DeformSampler& deform,
                             std::span<const double> thresholds, unsigned threads) {
  if (data.empty()) throw ConfigError("accuracy_curve: empty dataset");
  const MatchErrors m = feature_match_errors(data, features, deform, threads);
  return curve_from_errors(m.errors, m.excluded, thresholds);
}

FeatureFn tap_features(const LandmarkModel& model, LayerTap which) {
  return [&model, which](const Image& x) { return model.tap(x, which); };
}

AccuracyCurve random_baseline_curve(std::span<const Point> targets, const DomainSpec& domain,
                                    std::span<const double> thresholds, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xBA5E));
  std::vector<double> errors;
  errors.reserve(targets.size());
  for (const Point& t : targets) {
    const Point guess{uniform(rng, 0.0, domain.height), uniform(rng, 0.0, domain.width)};
    errors.push_back(distance(guess, t));
  }
  return curve_from_errors(errors, 0, thresholds);
}

namespace {

// Area of the disc (c, radius) inside [0,H] x [0,W]: integral over rows of the
// clipped chord length, piecewise in closed form between the kinks.
double clipped_disc_area(Point c, double radius, double height, double width) {
  if (radius <= 0.0) return 0.0;
  const double r2 = radius * radius;
  // Antiderivative of sqrt(r^2 - u^2).
  auto half_chord_integral = [&](double u) {
    u = std::clamp(u, -radius, radius);
    return 0.5 * (u * std::sqrt(std::max(0.0, r2 - u * u)) + r2 * std::asin(u / radius));
  };
  const double lo = std::max(0.0, c.row - radius), hi = std::min(height, c.row + radius);
  if (lo >= hi) return 0.0;
  std::vector<double> cuts{lo, hi};
  // Kinks of the chord: where the circle meets the vertical box edges.
  for (double edge : {c.col, width - c.col}) {
    if (std::abs(edge) < radius) {
      const double dr = std::sqrt(r2 - edge * edge);
      for (double r : {c.row - dr, c.row + dr}) {
        if (r > lo && r < hi) cuts.push_back(r);
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  double area = 0.0;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s], b = cuts[s + 1], len = b - a;
    const double mid = 0.5 * (a + b);
    const double h = std::sqrt(std::max(0.0, r2 - (mid - c.row) * (mid - c.row)));
    if (std::min(width, c.col + h) <= std::max(0.0, c.col - h)) continue;
    const double arc = half_chord_integral(b - c.row) - half_chord_integral(a - c.row);
    const double right = c.col + h > width ? width * len : c.col * len + arc;
    const double left = c.col - h < 0.0 ? 0.0 : c.col * len - arc;
    area += right - left;
  }
  return area;
}

}  // namespace

std::vector<double> expected_random_accuracy(std::span<const Point> targets, const DomainSpec& domain,
                                             std::span<const double> thresholds) {
  std::vector<double> out;
  const double total = static_cast<double>(domain.height) * domain.width;
  for (double d : thresholds) {
    double acc = 0.0;
    for (const Point& t : targets) acc += clipped_disc_area(t, d, domain.height, domain.width) / total;
    out.push_back(targets.empty() ? 0.0 : acc / static_cast<double>(targets.size()));
  }
  return out;
}

double pck_within(const LandmarkSet& pred, const LandmarkSet& gt, double d) {
  if (pred.size() != gt.size()) {
    throw DimensionError("pck_within: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(gt.size()) + " ground-truth landmarks");
  }
  std::size_t n = 0, hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid[i]) continue;
    ++n;
    hits += distance(pred.points[i], gt.points[i]) <= d ? 1 : 0;
  }
  if (n == 0) throw DataError("pck_within: no visible ground-truth landmarks");
  return static_cast<double>(hits) / static_cast<double>(n);
}

PckReport pck_dataset(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts, double d) {
  if (preds.size() != gts.size()) throw DimensionError("pck_dataset: prediction and ground-truth counts differ");
  if (gts.empty()) throw DataError("pck_dataset: empty evaluation set");
  const std::size_t j = gts[0].size();
  std::vector<std::size_t> hits(j, 0), counts(j, 0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (preds[i].size() != j || gts[i].size() != j) throw DimensionError("pck_dataset: inconsistent landmark counts");
    for (std::size_t k = 0; k < j; ++k) {
      if (!gts[i].valid[k]) continue;
      ++counts[k];
      hits[k] += distance(preds[i].points[k], gts[i].points[k]) <= d ? 1 : 0;
    }
  }
  PckReport r;
  for (std::size_t k = 0; k < j; ++k) {
    r.per_landmark.push_back(counts[k] ? 100.0 * static_cast<double>(hits[k]) / static_cast<double>(counts[k]) : 0.0);
    r.average += r.per_landmark.back();
  }
  r.average /= static_cast<double>(j);
  return r;
}

double iod_mse(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts, std::pair<int, int> eyes) {
  if (preds.size() != gts.size()) throw DimensionError("iod_mse: prediction and ground-truth counts differ");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const LandmarkSet& gt = gts[i];
    if (preds[i].size() != gt.size()) throw DimensionError("iod_mse: landmark count mismatch");
    const auto e0 = static_cast<std::size_t>(eyes.first), e1 = static_cast<std::size_t>(eyes.second);
    if (e0 >= gt.size() || e1 >= gt.size()) throw ConfigError("iod_mse: eye index out of range");
    const double iod = distance(gt.points[e0], gt.points[e1]);
    if (!(iod > 0.0)) throw DataError("iod_mse: zero inter-ocular distance in example " + std::to_string(i));
    for (std::size_t k = 0; k < gt.size(); ++k) {
      if (!gt.valid[k]) continue;
      total += distance(preds[i].points[k], gt.points[k]) / iod;
      ++n;
    }
  }
  if (n == 0) throw DataError("iod_mse: no visible landmarks");
  return 100.0 * total / static_cast<double>(n);
}

}  // namespace lmk
