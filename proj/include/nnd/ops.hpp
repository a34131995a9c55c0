#pragma once

#include "nnd/tensor.hpp"

namespace nnd {

// Elementwise binary ops broadcast numpy-style (trailing dimensions aligned).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, float c);
Tensor mul_scalar(const Tensor& x, float c);
/// c - x
Tensor rsub_scalar(const Tensor& x, float c);

Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// x * sigmoid(x) (beta = 1).
Tensor swish(const Tensor& x);
/// The `order`-th derivative of swish, elementwise; order in [0, 3].
Tensor swish_derivative(const Tensor& x, int order);

/// Sum over all elements; returns a rank-0 tensor. 64-bit accumulation.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces `x` onto `shape` (the inverse of broadcasting). 64-bit accumulation.
Tensor sum_to(const Tensor& x, const Shape& shape);
/// Broadcasts `x` to `shape`.
Tensor expand(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, const Shape& shape);

/// 2-D matrix product op(a)·op(b) with optional transposes.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
/// input (N×D) · weight (D×M) + bias (M).
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Euclidean norm of each row of a rank-2 tensor: sqrt(sum x^2 + 1e-12). Returns shape [N].
Tensor l2_norm_rows(const Tensor& x);
inline constexpr float kNormEpsilon = 1e-12F;

/// Softmax / log-softmax over the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

/// "same"-padded 2-D convolution. input NHWC, kernel [K, K, Cin, Cout] with
/// odd K. Output extents are ceil(extent / stride); zero padding, with the
/// extra row/column on the leading edge when the total is odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride);

/// Adjoints of conv2d; exposed because they are graph ops in their own right.
Tensor conv2d_input_grad(const Tensor& grad_output, const Tensor& kernel, const Shape& input_shape,
                         int stride);
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_output, std::int64_t kernel_size,
                          int stride);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

/// Output shape of numpy-style broadcasting; throws ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace nnd
