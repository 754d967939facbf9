#pragma once

#include <cstddef>

#include "svae/tensor.hpp"

// Differentiable tensor operations. Every op records a backward hook when
// grad recording is enabled and at least one input requires grad.
namespace svae::ops {

// Elementwise; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Sum of all elements -> shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Same values, new shape; element count must match.
Tensor reshape(const Tensor& a, Shape shape);

// Columns [start, start+width) of a 2-D tensor [rows, cols].
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t width);

// Batched over all leading axes: a[..., d], b[..., d] -> out[..., d, d].
// outer:     out[..., i, j] = a[..., i] * b[..., j]
// outer_sum: out[..., i, j] = a[..., i] + b[..., j]
Tensor outer(const Tensor& a, const Tensor& b);
Tensor outer_sum(const Tensor& a, const Tensor& b);

// x[B, in], weight[out, in], bias[out] -> [B, out]
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x[B, Cin, H, W], weight[Cout, Cin, k, k], bias[Cout] -> [B, Cout, H', W']
// with H' = floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Adjoint of conv2d with the same weight tensor and geometry, plus bias.
// x[B, Cin, H, W], weight[Cin, Cout, k, k], bias[Cout]
// -> [B, Cout, (H-1)*stride - 2*padding + k + output_padding, ...]
Tensor conv2d_transpose(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding, std::size_t output_padding = 0);

// Center crop and/or zero pad the two spatial axes of x[B, C, H, W].
Tensor crop_or_pad(const Tensor& x, std::size_t height, std::size_t width);

}  // namespace svae::ops
