#pragma once

#include <cstdint>
#include <vector>

#include "lmk/tensor.hpp"

namespace lmk::layers {

// Stride-1 "same" convolution with odd square kernel k and zero padding k/2.
// x: (Cin,H,W), weight: (Cout,Cin,k,k), bias: (Cout).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Accumulates into grad_weight / grad_bias; writes grad_input when non-null.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     Tensor& grad_weight, Tensor& grad_bias, Tensor* grad_input);

void relu_inplace(Tensor& x);
// grad *= (activation > 0)
void relu_backward(const Tensor& activation, Tensor& grad);

// 2x2 max pool, stride 2. `argmax` receives the flat input index of each output.
Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>& argmax);
Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::int32_t>& argmax,
                         const std::vector<int>& input_shape);

// Nearest-neighbour x2 upsampling and its adjoint (2x2 sum).
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a gradient of concat(a,b) back into the two parts.
void split_channels(const Tensor& grad, int channels_a, Tensor& grad_a, Tensor& grad_b);

}  // namespace lmk::layers
