#include "lmk/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "lmk/errors.hpp"

namespace lmk::layers {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_conv_shapes(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || weight.rank() != 4 || bias.rank() != 1) {
    throw DimensionError("conv2d: expected x(C,H,W), weight(O,I,k,k), bias(O)");
  }
  if (weight.dim(1) != x.channels() || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0 ||
      bias.dim(0) != weight.dim(0)) {
    throw DimensionError("conv2d: incompatible shapes x" + shape_string(x.shape()) + " w" +
                         shape_string(weight.shape()));
  }
}

// col: (Cin*k*k, H*W), row-major.
void im2col(const Tensor& x, int k, AlignedFloats& col) {
  const int c_in = x.channels(), h = x.height(), w = x.width(), pad = k / 2;
  const std::size_t hw = x.plane_size();
  col.assign(static_cast<std::size_t>(c_in) * k * k * hw, 0.0f);
  for (int c = 0; c < c_in; ++c) {
    const float* src = x.data() + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int r = 0; r < h; ++r) {
          const int sr = r + dy;
          if (sr < 0 || sr >= h || x1 <= x0) continue;
          std::memcpy(dst + r * w + x0, src + sr * w + x0 + dx,
                      static_cast<std::size_t>(x1 - x0) * sizeof(float));
        }
      }
    }
  }
}

void col2im(const AlignedFloats& col, int k, Tensor& x) {
  const int c_in = x.channels(), h = x.height(), w = x.width(), pad = k / 2;
  const std::size_t hw = x.plane_size();
  x.fill(0.0f);
  for (int c = 0; c < c_in; ++c) {
    float* dst = x.data() + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int r = 0; r < h; ++r) {
          const int sr = r + dy;
          if (sr < 0 || sr >= h) continue;
          float* drow = dst + sr * w + dx;
          const float* srow = src + r * w;
          for (int q = x0; q < x1; ++q) drow[q] += srow[q];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_conv_shapes(x, weight, bias);
  const int c_out = weight.dim(0), c_in = x.channels(), k = weight.dim(2);
  const auto hw = static_cast<Eigen::Index>(x.plane_size());
  Tensor y(c_out, x.height(), x.width());
  MapMat out(y.data(), c_out, hw);
  ConstMapMat wmat(weight.data(), c_out, static_cast<Eigen::Index>(c_in) * k * k);
  if (k == 1) {
    out.noalias() = wmat * ConstMapMat(x.data(), c_in, hw);
  } else {
    thread_local AlignedFloats col;
    im2col(x, k, col);
    out.noalias() = wmat * ConstMapMat(col.data(), static_cast<Eigen::Index>(c_in) * k * k, hw);
  }
  for (int o = 0; o < c_out; ++o) out.row(o).array() += bias.data()[o];
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     Tensor& grad_weight, Tensor& grad_bias, Tensor* grad_input) {
  check_conv_shapes(x, weight, grad_bias);
  require_same_shape(weight, grad_weight, "conv2d_backward weight");
  const int c_out = weight.dim(0), c_in = x.channels(), k = weight.dim(2);
  const auto hw = static_cast<Eigen::Index>(x.plane_size());
  const auto rows = static_cast<Eigen::Index>(c_in) * k * k;
  if (grad_out.rank() != 3 || grad_out.channels() != c_out ||
      grad_out.plane_size() != x.plane_size()) {
    throw DimensionError("conv2d_backward: grad_out shape " + shape_string(grad_out.shape()));
  }
  ConstMapMat gout(grad_out.data(), c_out, hw);
  MapMat gw(grad_weight.data(), c_out, rows);
  Eigen::Map<Eigen::VectorXf> gb(grad_bias.data(), c_out);
  gb += gout.rowwise().sum();
  ConstMapMat wmat(weight.data(), c_out, rows);

  if (k == 1) {
    ConstMapMat xin(x.data(), c_in, hw);
    gw.noalias() += gout * xin.transpose();
    if (grad_input) {
      *grad_input = Tensor(x.shape());
      MapMat(grad_input->data(), c_in, hw).noalias() = wmat.transpose() * gout;
    }
    return;
  }
  thread_local AlignedFloats col;
  im2col(x, k, col);
  gw.noalias() += gout * ConstMapMat(col.data(), rows, hw).transpose();
  if (grad_input) {
    MapMat(col.data(), rows, hw).noalias() = wmat.transpose() * gout;
    *grad_input = Tensor(x.shape());
    col2im(col, k, *grad_input);
  }
}

void relu_inplace(Tensor& x) {
  for (float& v : x.values()) v = v > 0.0f ? v : 0.0f;
}

void relu_backward(const Tensor& activation, Tensor& grad) {
  require_same_shape(activation, grad, "relu_backward");
  const float* a = activation.data();
  float* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(a[i] > 0.0f)) g[i] = 0.0f;
  }
}

Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>& argmax) {
  const int c = x.channels(), h = x.height(), w = x.width();
  if (h % 2 || w % 2) throw DimensionError("maxpool2: odd spatial size " + shape_string(x.shape()));
  Tensor y(c, h / 2, w / 2);
  argmax.resize(y.size());
  std::size_t o = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < h / 2; ++r) {
      for (int q = 0; q < w / 2; ++q, ++o) {
        std::int32_t best = static_cast<std::int32_t>((static_cast<std::size_t>(ch) * h + 2 * r) * w + 2 * q);
        float bv = x.data()[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx =
                static_cast<std::int32_t>((static_cast<std::size_t>(ch) * h + 2 * r + dy) * w + 2 * q + dx);
            if (x.data()[idx] > bv) {
              bv = x.data()[idx];
              best = idx;
            }
          }
        }
        y.data()[o] = bv;
        argmax[o] = best;
      }
    }
  }
  return y;
}

Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::int32_t>& argmax,
                         const std::vector<int>& input_shape) {
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g.data()[argmax[i]] += grad_out.data()[i];
  return g;
}

Tensor upsample2(const Tensor& x) {
  const int c = x.channels(), h = x.height(), w = x.width();
  Tensor y(c, 2 * h, 2 * w);
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < 2 * h; ++r) {
      const float* src = x.data() + (static_cast<std::size_t>(ch) * h + r / 2) * w;
      float* dst = y.data() + (static_cast<std::size_t>(ch) * 2 * h + r) * 2 * w;
      for (int q = 0; q < 2 * w; ++q) dst[q] = src[q / 2];
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  const int c = grad_out.channels(), h = grad_out.height() / 2, w = grad_out.width() / 2;
  Tensor g(c, h, w);
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < 2 * h; ++r) {
      const float* src = grad_out.data() + (static_cast<std::size_t>(ch) * 2 * h + r) * 2 * w;
      float* dst = g.data() + (static_cast<std::size_t>(ch) * h + r / 2) * w;
      for (int q = 0; q < 2 * w; ++q) dst[q / 2] += src[q];
    }
  }
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor y(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), y.data());
  std::copy(b.values().begin(), b.values().end(), y.data() + a.size());
  return y;
}

void split_channels(const Tensor& grad, int channels_a, Tensor& grad_a, Tensor& grad_b) {
  const int h = grad.height(), w = grad.width();
  grad_a = Tensor(channels_a, h, w);
  grad_b = Tensor(grad.channels() - channels_a, h, w);
  std::copy(grad.data(), grad.data() + grad_a.size(), grad_a.data());
  std::copy(grad.data() + grad_a.size(), grad.data() + grad.size(), grad_b.data());
}

}  // namespace lmk::layers
