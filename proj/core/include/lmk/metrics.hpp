#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lmk/example.hpp"
#include "lmk/geometry.hpp"
#include "lmk/netarch.hpp"

namespace lmk {

/// Sampled Acc(d): fraction of evaluated pairs whose error is <= d.
struct AccuracyCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;

  nlohmann::json to_json() const;
  /// "d acc n_evaluated n_excluded" rows.
  std::string to_table() const;
};

/// Thresholds 2, 4, ..., 20.
std::vector<double> default_thresholds();

/// Grid location in `deformed` whose feature has the highest cosine similarity
/// to `reference`; ties go to the smallest row, then column. Zero-norm pixels
/// never match. Throws NumericError if |reference| < 1e-8.
Point match_location(std::span<const double> reference, const FeatureMap& deformed);

/// Acc(d) for each threshold from per-pair errors.
AccuracyCurve curve_from_errors(std::span<const double> errors, std::size_t excluded,
                                std::span<const double> thresholds);

using FeatureFn = std::function<FeatureMap(const Image&)>;
/// Deformation used for example `index`; must be a pure function of the index.
using DeformSampler = std::function<CoordMap(std::size_t index)>;

struct MatchErrors {
  std::vector<double> errors;  // evaluated pairs, example-major order
  std::size_t excluded = 0;
};

/// For every example: x' = g♯x, f = F(x), f' = F(x'); each visible y_j is matched
/// into f' and compared with g(y_j). Pairs with g(y_j) outside Λ are excluded.
/// Per-example results are reduced in example order for any thread count.
MatchErrors feature_match_errors(const Dataset& data, const FeatureFn& features, const DeformSampler& deform,
                                 unsigned threads = 1);

/// Throws ConfigError on an empty dataset.
AccuracyCurve accuracy_curve(const Dataset& data, const FeatureFn& features, const DeformSampler& deform,
                             std::span<const double> thresholds, unsigned threads = 1);

/// Feature function reading tap `which` of a model.
FeatureFn tap_features(const LandmarkModel& model, LayerTap which);

/// Random-prediction baseline: one uniform draw over Λ per target point.
AccuracyCurve random_baseline_curve(std::span<const Point> targets, const DomainSpec& domain,
                                    std::span<const double> thresholds, std::uint64_t seed);

/// Exact expectation of the random baseline: mean over targets of
/// area(disc(target, d) ∩ Λ) / area(Λ).
std::vector<double> expected_random_accuracy(std::span<const Point> targets, const DomainSpec& domain,
                                             std::span<const double> thresholds);

/// Fraction of landmarks with |pred - gt| <= d, over landmarks visible in gt.
/// Throws DimensionError on count mismatch, DataError if none is visible.
double pck_within(const LandmarkSet& pred, const LandmarkSet& gt, double d);

struct PckReport {
  std::vector<double> per_landmark;  // percent
  double average = 0.0;              // mean of per_landmark, percent
};

/// Dataset-level PCK per landmark index (visible pairs only).
PckReport pck_dataset(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts, double d);

/// Mean over images and visible landmarks of |pred - gt| / |gt_eye0 - gt_eye1|, in percent.
/// Throws DataError on a zero inter-ocular distance.
double iod_mse(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts, std::pair<int, int> eyes);

}  // namespace lmk
