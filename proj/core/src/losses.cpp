#include "lmk/losses.hpp"

#include <cmath>
#include <string>

#include "lmk/errors.hpp"

namespace lmk {

EquivarianceLoss equivariance_loss(const LandmarkSet& y_deformed, const LandmarkSet& y_transported) {
  if (y_deformed.size() != y_transported.size()) {
    throw DimensionError("equivariance_loss: landmark counts differ (" + std::to_string(y_deformed.size()) +
                         " vs " + std::to_string(y_transported.size()) + ")");
  }
  const std::size_t k = y_deformed.size();
  EquivarianceLoss out;
  out.grad_deformed.assign(k, Point{});
  out.grad_transported.assign(k, Point{});
  auto is_valid = [](const LandmarkSet& s, std::size_t i) { return i >= s.valid.size() || s.valid[i] != 0; };
  for (std::size_t i = 0; i < k; ++i) {
    if (is_valid(y_deformed, i) && is_valid(y_transported, i)) ++out.valid_pairs;
  }
  if (out.valid_pairs == 0) throw UndefinedLoss("equivariance_loss: no valid landmark pairs");
  const double inv = 1.0 / static_cast<double>(out.valid_pairs);
  for (std::size_t i = 0; i < k; ++i) {
    if (!is_valid(y_deformed, i) || !is_valid(y_transported, i)) continue;
    const Point d = y_deformed.points[i] - y_transported.points[i];
    out.value += inv * (d.row * d.row + d.col * d.col);
    out.grad_deformed[i] = (2.0 * inv) * d;
    out.grad_transported[i] = (-2.0 * inv) * d;
  }
  return out;
}

FieldLoss diversity_loss(std::span<const ProbMap> probmaps, int patch) {
  if (probmaps.empty()) throw ConfigError("diversity_loss: need at least one probability map");
  const int h = probmaps[0].height, w = probmaps[0].width;
  if (patch < 1 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("diversity_loss: patch " + std::to_string(patch) + " does not divide " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  for (const auto& p : probmaps) {
    if (p.height != h || p.width != w) throw DimensionError("diversity_loss: probability maps differ in size");
  }
  const std::size_t k = probmaps.size();
  FieldLoss out;
  out.grad.assign(k, ScalarField(h, w, 1.0));
  std::vector<double> mass(k);
  for (int pr = 0; pr < h; pr += patch) {
    for (int pc = 0; pc < w; pc += patch) {
      for (std::size_t i = 0; i < k; ++i) {
        double m = 0.0;
        for (int r = pr; r < pr + patch; ++r) {
          for (int c = pc; c < pc + patch; ++c) m += probmaps[i].at(r, c);
        }
        mass[i] = m;
      }
      std::size_t best = 0;
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        total += mass[i];
        if (mass[i] > mass[best]) best = i;
      }
      out.value += total - mass[best];
      for (int r = pr; r < pr + patch; ++r) {
        for (int c = pc; c < pc + patch; ++c) out.grad[best].at(r, c) = 0.0;
      }
    }
  }
  return out;
}

double covariance_trace(const ProbMap& p) {
  double second = 0.0;
  const Point m = expected_coordinate(p);
  for (int r = 0; r < p.height; ++r) {
    for (int c = 0; c < p.width; ++c) second += p.at(r, c) * (static_cast<double>(r) * r + static_cast<double>(c) * c);
  }
  return second - (m.row * m.row + m.col * m.col);
}

BatchFieldLoss variance_loss(std::span<const std::vector<ProbMap>> batch) {
  if (batch.empty()) throw ConfigError("variance_loss: empty batch");
  BatchFieldLoss out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    if (item.empty()) throw ConfigError("variance_loss: item without probability maps");
    const double scale = inv_b / static_cast<double>(item.size());
    std::vector<ScalarField> grads;
    grads.reserve(item.size());
    for (const auto& p : item) {
      out.value += scale * covariance_trace(p);
      const Point m = expected_coordinate(p);
      ScalarField g(p.height, p.width);
      for (int r = 0; r < p.height; ++r) {
        for (int c = 0; c < p.width; ++c) {
          g.at(r, c) = scale * (static_cast<double>(r) * r + static_cast<double>(c) * c - 2.0 * (m.row * r + m.col * c));
        }
      }
      grads.push_back(std::move(g));
    }
    out.grad.push_back(std::move(grads));
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < 1e-8 || nb < 1e-8) throw NumericError("cosine_similarity: zero-norm vector");
  return ab / (na * nb);
}

namespace {

// Row-normalises m, returning the norms. Throws on near-zero rows.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m, Eigen::VectorXd& norms) {
  norms = m.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) >= 1e-8)) throw NumericError("contrastive_loss: feature vector with norm below 1e-8");
  }
  return norms.cwiseInverse().asDiagonal() * m;
}

// Gradient through a = f / |f|.
Eigen::MatrixXd normalize_rows_backward(const Eigen::MatrixXd& a, const Eigen::VectorXd& norms,
                                        const Eigen::MatrixXd& grad_a) {
  const Eigen::VectorXd dots = (a.array() * grad_a.array()).rowwise().sum();
  return norms.cwiseInverse().asDiagonal() * (grad_a - dots.asDiagonal() * a);
}

}  // namespace

ContrastiveLoss contrastive_loss(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                                 double temperature) {
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
    throw DimensionError("contrastive_loss: anchor/positive shapes differ");
  }
  const Eigen::Index n = anchors.rows();
  if (n < 2) throw ConfigError("contrastive_loss: need B*K >= 2 location pairs");
  if (!(temperature > 0.0)) throw ConfigError("contrastive_loss: temperature must be > 0");

  Eigen::VectorXd na, np;
  const Eigen::MatrixXd a = normalize_rows(anchors, na);
  const Eigen::MatrixXd p = normalize_rows(positives, np);
  const double inv_t = 1.0 / temperature;
  // Logits are bounded by 1/τ; shifting by it keeps exp() in range.
  const Eigen::MatrixXd cross = (a * p.transpose()) * inv_t;
  Eigen::MatrixXd e_aa = ((a * a.transpose()).array() * inv_t - inv_t).exp().matrix();
  Eigen::MatrixXd e_pp = ((p * p.transpose()).array() * inv_t - inv_t).exp().matrix();
  const Eigen::MatrixXd e_ap = (cross.array() - inv_t).exp().matrix();
  e_aa.diagonal().setZero();
  e_pp.diagonal().setZero();

  const Eigen::VectorXd den = e_aa.rowwise().sum() + e_ap.rowwise().sum();
  const Eigen::VectorXd den_p = e_pp.rowwise().sum() + e_ap.colwise().sum().transpose();

  const double inv_n = 1.0 / static_cast<double>(n);
  ContrastiveLoss out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shifted = cross(i, i) - inv_t;
    out.value -= inv_n * ((shifted - std::log(den(i))) + (shifted - std::log(den_p(i))));
  }

  // Gradients with respect to the logit matrices.
  const Eigen::MatrixXd g_aa = inv_n * (den.cwiseInverse().asDiagonal() * e_aa);
  const Eigen::MatrixXd g_pp = inv_n * (den_p.cwiseInverse().asDiagonal() * e_pp);
  Eigen::MatrixXd g_ap = inv_n * (den.cwiseInverse().asDiagonal() * e_ap + e_ap * den_p.cwiseInverse().asDiagonal());
  g_ap.diagonal().array() -= 2.0 * inv_n;

  const Eigen::MatrixXd grad_a = inv_t * ((g_aa + g_aa.transpose()) * a + g_ap * p);
  const Eigen::MatrixXd grad_p = inv_t * ((g_pp + g_pp.transpose()) * p + g_ap.transpose() * a);
  out.grad_anchor = normalize_rows_backward(a, na, grad_a);
  out.grad_positive = normalize_rows_backward(p, np, grad_p);
  return out;
}

double combined_landmark_loss(const LossWeights& w, const LossParts& parts) {
  return w.equivariance * parts.equivariance + w.diversity * parts.diversity + w.variance * parts.variance;
}

LossParts combined_loss_gradient(const LossWeights& w) { return {w.equivariance, w.diversity, w.variance}; }

}  // namespace lmk
