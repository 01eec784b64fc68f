#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "lmk/geometry.hpp"
#include "lmk/tensor.hpp"

namespace lmk {

/// Row-major H x W field of doubles.
struct ScalarField {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return values.size(); }
};

/// Unnormalised per-landmark scores.
using Heatmap = ScalarField;
/// Spatial-softmax normalisation of a heatmap: nonnegative, sums to one.
using ProbMap = ScalarField;

Heatmap heatmap_from_channel(const Tensor& maps, int channel);
/// Writes `field` into channel `channel` of `maps` (float).
void field_to_channel(const ScalarField& field, Tensor& maps, int channel);

/// p(λ) = exp(h(λ)) / Σ exp(h(μ)), max-subtracted. Throws NumericError on non-finite input.
ProbMap spatial_softmax(const Heatmap& h);
/// Vector-Jacobian product of the softmax: grad_h = p ⊙ (grad_p − <p, grad_p>).
Heatmap spatial_softmax_backward(const ProbMap& p, const ScalarField& grad_p);

/// Probability-weighted mean pixel coordinate Σ λ p(λ).
Point expected_coordinate(const ProbMap& p);
Point spatial_soft_argmax(const Heatmap& h);
/// Gradient of <grad_y, soft_argmax(h)> with respect to h, given p = softmax(h).
Heatmap spatial_soft_argmax_backward(const ProbMap& p, Point grad_y);

/// Bilinear samples of f at each coordinate; row n holds the D-vector at coords[n].
/// Throws DomainError for coordinates outside Λ.
Eigen::MatrixXd sample_features_at(const FeatureMap& f, std::span<const Point> coords);
/// Scatters grad_rows (N x D) into grad_f (same shape as f), accumulating.
void sample_features_backward(std::span<const Point> coords, const Eigen::MatrixXd& grad_rows,
                              FeatureMap& grad_f);

}  // namespace lmk
