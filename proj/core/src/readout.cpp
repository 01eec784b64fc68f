#include "lmk/readout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lmk/errors.hpp"

namespace lmk {

Heatmap heatmap_from_channel(const Tensor& maps, int channel) {
  Heatmap h(maps.height(), maps.width());
  const auto plane = maps.channel(channel);
  std::copy(plane.begin(), plane.end(), h.values.begin());
  return h;
}

void field_to_channel(const ScalarField& field, Tensor& maps, int channel) {
  auto plane = maps.channel(channel);
  if (plane.size() != field.size()) throw DimensionError("field_to_channel: size mismatch");
  std::transform(field.values.begin(), field.values.end(), plane.begin(),
                 [](double v) { return static_cast<float>(v); });
}

ProbMap spatial_softmax(const Heatmap& h) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : h.values) {
    if (!std::isfinite(v)) throw NumericError("spatial_softmax: non-finite heatmap score");
    mx = std::max(mx, v);
  }
  ProbMap p(h.height, h.width);
  double sum = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    p.values[i] = std::exp(h.values[i] - mx);
    sum += p.values[i];
  }
  for (double& v : p.values) v /= sum;
  return p;
}

Heatmap spatial_softmax_backward(const ProbMap& p, const ScalarField& grad_p) {
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p.values[i] * grad_p.values[i];
  Heatmap g(p.height, p.width);
  for (std::size_t i = 0; i < p.size(); ++i) g.values[i] = p.values[i] * (grad_p.values[i] - dot);
  return g;
}

Point expected_coordinate(const ProbMap& p) {
  Point y;
  for (int r = 0; r < p.height; ++r) {
    for (int c = 0; c < p.width; ++c) {
      const double w = p.at(r, c);
      y.row += w * r;
      y.col += w * c;
    }
  }
  return y;
}

Point spatial_soft_argmax(const Heatmap& h) { return expected_coordinate(spatial_softmax(h)); }

Heatmap spatial_soft_argmax_backward(const ProbMap& p, Point grad_y) {
  const Point y = expected_coordinate(p);
  Heatmap g(p.height, p.width);
  for (int r = 0; r < p.height; ++r) {
    for (int c = 0; c < p.width; ++c) {
      g.at(r, c) = p.at(r, c) * ((r - y.row) * grad_y.row + (c - y.col) * grad_y.col);
    }
  }
  return g;
}

namespace {

struct Taps {
  int r0, c0, r1, c1;
  double wr, wc;  // weight of r1 / c1
};

Taps bilinear_taps(Point p, int h, int w) {
  if (!(p.row >= 0.0 && p.row <= h && p.col >= 0.0 && p.col <= w)) {
    throw DomainError("feature sample outside the image domain at (" + std::to_string(p.row) + ", " +
                      std::to_string(p.col) + ")");
  }
  const double r = std::min(p.row, h - 1.0), c = std::min(p.col, w - 1.0);
  const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
  return {r0, c0, std::min(r0 + 1, h - 1), std::min(c0 + 1, w - 1), r - r0, c - c0};
}

}  // namespace

Eigen::MatrixXd sample_features_at(const FeatureMap& f, std::span<const Point> coords) {
  const int d = f.channels(), h = f.height(), w = f.width();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(coords.size()), d);
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const Taps t = bilinear_taps(coords[n], h, w);
    const double w00 = (1 - t.wr) * (1 - t.wc), w01 = (1 - t.wr) * t.wc;
    const double w10 = t.wr * (1 - t.wc), w11 = t.wr * t.wc;
    for (int ch = 0; ch < d; ++ch) {
      out(static_cast<Eigen::Index>(n), ch) =
          w00 * f.at(ch, t.r0, t.c0) + w01 * f.at(ch, t.r0, t.c1) + w10 * f.at(ch, t.r1, t.c0) +
          w11 * f.at(ch, t.r1, t.c1);
    }
  }
  return out;
}

void sample_features_backward(std::span<const Point> coords, const Eigen::MatrixXd& grad_rows,
                              FeatureMap& grad_f) {
  const int d = grad_f.channels(), h = grad_f.height(), w = grad_f.width();
  if (grad_rows.rows() != static_cast<Eigen::Index>(coords.size()) || grad_rows.cols() != d) {
    throw DimensionError("sample_features_backward: gradient rows do not match coordinates");
  }
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const Taps t = bilinear_taps(coords[n], h, w);
    const double w00 = (1 - t.wr) * (1 - t.wc), w01 = (1 - t.wr) * t.wc;
    const double w10 = t.wr * (1 - t.wc), w11 = t.wr * t.wc;
    for (int ch = 0; ch < d; ++ch) {
      const double g = grad_rows(static_cast<Eigen::Index>(n), ch);
      grad_f.at(ch, t.r0, t.c0) += static_cast<float>(w00 * g);
      grad_f.at(ch, t.r0, t.c1) += static_cast<float>(w01 * g);
      grad_f.at(ch, t.r1, t.c0) += static_cast<float>(w10 * g);
      grad_f.at(ch, t.r1, t.c1) += static_cast<float>(w11 * g);
    }
  }
}

}  // namespace lmk
