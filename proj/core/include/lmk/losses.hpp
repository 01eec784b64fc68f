#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "lmk/geometry.hpp"
#include "lmk/readout.hpp"

namespace lmk {

// Training objectives. Every loss returns its value together with the
// gradient with respect to its direct inputs; all arithmetic is float64.

struct EquivarianceLoss {
  double value = 0.0;
  std::vector<Point> grad_deformed;     // d/d y_k[g♯x]
  std::vector<Point> grad_transported;  // d/d g[y_k(x)]
  std::size_t valid_pairs = 0;
};

/// Mean over valid pairs of |y_deformed_k - y_transported_k|^2 (squared pixels).
/// A pair counts only when both entries are flagged valid. Throws UndefinedLoss
/// when no pair is valid.
EquivarianceLoss equivariance_loss(const LandmarkSet& y_deformed, const LandmarkSet& y_transported);

struct FieldLoss {
  double value = 0.0;
  std::vector<ScalarField> grad;  // one per input map
};

/// Sum over patch x patch tiles P of [Σ_k m_k(P) - max_k m_k(P)], where m_k(P) is
/// the mass of probability map k inside P. patch == 1 is the per-pixel form.
FieldLoss diversity_loss(std::span<const ProbMap> probmaps, int patch);

/// Trace of the coordinate covariance under p (squared pixels), as a function of
/// the (assumed normalised) probability values.
double covariance_trace(const ProbMap& p);

struct BatchFieldLoss {
  double value = 0.0;
  std::vector<std::vector<ScalarField>> grad;  // [item][landmark]
};

/// Batch mean of the per-item mean over K of covariance_trace.
BatchFieldLoss variance_loss(std::span<const std::vector<ProbMap>> batch);

struct ContrastiveLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_anchor;    // d/d f_{b,k}
  Eigen::MatrixXd grad_positive;  // d/d f'_{b,k}
};

/// Exponential-cosine contrastive loss over N = B*K location pairs.
/// Row n of `anchors` is f_{b,k} (sampled in x_b), row n of `positives` is
/// f'_{b,k} (sampled at the transported location in x'_b). For each anchor the
/// denominator sums similarities to every other unprimed feature and to every
/// primed feature (its own positive included); the primed side is symmetric.
///   L = -(1/N) Σ_n [log p_n + log p'_n]
/// Throws ConfigError if N < 2 or temperature <= 0, NumericError on zero-norm rows.
ContrastiveLoss contrastive_loss(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                                 double temperature);

/// cos(a, b); throws NumericError when either norm is below 1e-8.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct LossWeights {
  double equivariance = 1.0;
  double diversity = 1.0;
  double variance = 1.0;
  int patch_size = 8;
};

struct LossParts {
  double equivariance = 0.0;
  double diversity = 0.0;
  double variance = 0.0;
};

double combined_landmark_loss(const LossWeights& w, const LossParts& parts);
/// d(total)/d(part) for each part.
LossParts combined_loss_gradient(const LossWeights& w);

}  // namespace lmk
