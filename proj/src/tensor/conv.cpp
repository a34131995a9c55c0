// Convolution kernels as strided GEMMs over the batch; taps that would only
// ever see zero padding are never visited.

#include <Eigen/Core>
#include <algorithm>

#include "nnd/error.hpp"
#include "nnd/ops.hpp"

namespace nnd {

using detail::InputMask;
using detail::make_result;

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvGeometry {
  std::int64_t batch = 0, height = 0, width = 0, in_channels = 0;
  std::int64_t out_height = 0, out_width = 0, out_channels = 0;
  std::int64_t kernel = 0, pad_top = 0, pad_left = 0;
  int stride = 1;

  Shape input_shape() const { return {batch, height, width, in_channels}; }
  Shape output_shape() const { return {batch, out_height, out_width, out_channels}; }
  Shape kernel_shape() const { return {kernel, kernel, in_channels, out_channels}; }
};

std::int64_t leading_pad(std::int64_t in, std::int64_t out, std::int64_t k, int stride) {
  const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + k - in, 0);
  return total - total / 2;
}

ConvGeometry make_geometry(const Shape& input, std::int64_t kernel, std::int64_t out_channels, int stride) {
  if (input.size() != 4) throw ShapeError("conv2d expects NHWC input, got " + shape_string(input));
  if (stride < 1) throw ShapeError("conv2d stride must be positive, got " + std::to_string(stride));
  if (kernel < 1 || kernel % 2 == 0) {
    throw ShapeError("conv2d kernel extent must be odd, got " + std::to_string(kernel));
  }
  ConvGeometry g;
  g.batch = input[0];
  g.height = input[1];
  g.width = input[2];
  g.in_channels = input[3];
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.out_height = (g.height + stride - 1) / stride;
  g.out_width = (g.width + stride - 1) / stride;
  g.pad_top = leading_pad(g.height, g.out_height, kernel, stride);
  g.pad_left = leading_pad(g.width, g.out_width, kernel, stride);
  return g;
}

void check_kernel(const ConvGeometry& g, const Shape& kernel) {
  if (kernel.size() != 4 || kernel[0] != kernel[1] || kernel[2] != g.in_channels) {
    throw ShapeError("conv2d kernel " + shape_string(kernel) + " incompatible with input " +
                     shape_string(g.input_shape()));
  }
}

// For output pixel (oy, ox) and kernel row ky, the taps that land inside the
// image form a contiguous run kx ∈ [kx0, kx0 + count). In NHWC that run is a
// contiguous slice of count·C_in floats of one input row, and in the
// [K, K, C_in, C_out] kernel it is a contiguous block of count·C_in rows, so
// every (pixel, ky) pair is one strided GEMM over the batch with no copies.
struct TapRun {
  std::int64_t out_offset;  // (oy * W_out + ox) * C_out
  std::int64_t in_offset;   // (iy * W + ix0) * C_in
  std::int64_t w_row;       // (ky * K + kx0) * C_in
  std::int64_t depth;       // count * C_in
};

std::vector<TapRun> tap_runs(const ConvGeometry& g) {
  std::vector<TapRun> runs;
  for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
    for (std::int64_t ox = 0; ox < g.out_width; ++ox) {
      const std::int64_t x_first = ox * g.stride - g.pad_left;
      const std::int64_t kx0 = std::max<std::int64_t>(0, -x_first);
      const std::int64_t kx1 = std::min<std::int64_t>(g.kernel, g.width - x_first);
      if (kx1 <= kx0) continue;
      for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
        const std::int64_t iy = oy * g.stride + ky - g.pad_top;
        if (iy < 0 || iy >= g.height) continue;
        runs.push_back({(oy * g.out_width + ox) * g.out_channels, (iy * g.width + x_first + kx0) * g.in_channels,
                        (ky * g.kernel + kx0) * g.in_channels, (kx1 - kx0) * g.in_channels});
      }
    }
  }
  return runs;
}

using Stride = Eigen::OuterStride<>;
using ConstStrided = Eigen::Map<const RowMat, 0, Stride>;
using MutStrided = Eigen::Map<RowMat, 0, Stride>;

std::vector<float> conv_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w) {
  std::vector<float> y(static_cast<std::size_t>(shape_numel(g.output_shape())), 0.0F);
  const std::int64_t x_stride = g.height * g.width * g.in_channels;
  const std::int64_t y_stride = g.out_height * g.out_width * g.out_channels;
  for (const auto& r : tap_runs(g)) {
    ConstStrided xs(x.data() + r.in_offset, g.batch, r.depth, Stride(x_stride));
    ConstMap ws(w.data() + r.w_row * g.out_channels, r.depth, g.out_channels);
    MutStrided ys(y.data() + r.out_offset, g.batch, g.out_channels, Stride(y_stride));
    ys.noalias() += xs * ws;
  }
  return y;
}

std::vector<float> conv_input_grad(const ConvGeometry& g, std::span<const float> gy, std::span<const float> w) {
  std::vector<float> gx(static_cast<std::size_t>(shape_numel(g.input_shape())), 0.0F);
  const std::int64_t x_stride = g.height * g.width * g.in_channels;
  const std::int64_t y_stride = g.out_height * g.out_width * g.out_channels;
  for (const auto& r : tap_runs(g)) {
    ConstStrided gys(gy.data() + r.out_offset, g.batch, g.out_channels, Stride(y_stride));
    ConstMap ws(w.data() + r.w_row * g.out_channels, r.depth, g.out_channels);
    MutStrided gxs(gx.data() + r.in_offset, g.batch, r.depth, Stride(x_stride));
    gxs.noalias() += gys * ws.transpose();
  }
  return gx;
}

std::vector<float> conv_kernel_grad(const ConvGeometry& g, std::span<const float> x, std::span<const float> gy) {
  std::vector<float> gw(static_cast<std::size_t>(shape_numel(g.kernel_shape())), 0.0F);
  const std::int64_t x_stride = g.height * g.width * g.in_channels;
  const std::int64_t y_stride = g.out_height * g.out_width * g.out_channels;
  for (const auto& r : tap_runs(g)) {
    ConstStrided xs(x.data() + r.in_offset, g.batch, r.depth, Stride(x_stride));
    ConstStrided gys(gy.data() + r.out_offset, g.batch, g.out_channels, Stride(y_stride));
    MutMap gws(gw.data() + r.w_row * g.out_channels, r.depth, g.out_channels);
    gws.noalias() += xs.transpose() * gys;
  }
  return gw;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride) {
  if (kernel.rank() != 4) throw ShapeError("conv2d kernel must be rank 4, got " + shape_string(kernel.shape()));
  const ConvGeometry g = make_geometry(input.shape(), kernel.dim(0), kernel.dim(3), stride);
  check_kernel(g, kernel.shape());
  auto y = conv_forward(g, input.values(), kernel.values());
  return make_result(g.output_shape(), std::move(y), "conv2d", {input, kernel},
                     [stride](const Tensor& gy, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = conv2d_input_grad(gy, in[1], in[0].shape(), stride);
                       if (need[1]) r[1] = conv2d_kernel_grad(in[0], gy, in[1].dim(0), stride);
                       return r;
                     });
}

Tensor conv2d_input_grad(const Tensor& grad_output, const Tensor& kernel, const Shape& input_shape, int stride) {
  if (kernel.rank() != 4) throw ShapeError("conv2d kernel must be rank 4, got " + shape_string(kernel.shape()));
  const ConvGeometry g = make_geometry(input_shape, kernel.dim(0), kernel.dim(3), stride);
  check_kernel(g, kernel.shape());
  if (grad_output.shape() != g.output_shape()) {
    throw ShapeError("conv2d output gradient " + shape_string(grad_output.shape()) + " expected " +
                     shape_string(g.output_shape()));
  }
  auto gx = conv_input_grad(g, grad_output.values(), kernel.values());
  return make_result(input_shape, std::move(gx), "conv2d_input_grad", {grad_output, kernel},
                     [stride](const Tensor& ggx, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = conv2d(ggx, in[1], stride);
                       if (need[1]) r[1] = conv2d_kernel_grad(ggx, in[0], in[1].dim(0), stride);
                       return r;
                     });
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_output, std::int64_t kernel_size, int stride) {
  if (grad_output.rank() != 4) {
    throw ShapeError("conv2d output gradient must be NHWC, got " + shape_string(grad_output.shape()));
  }
  const ConvGeometry g = make_geometry(input.shape(), kernel_size, grad_output.dim(3), stride);
  if (grad_output.shape() != g.output_shape()) {
    throw ShapeError("conv2d output gradient " + shape_string(grad_output.shape()) + " expected " +
                     shape_string(g.output_shape()));
  }
  auto gw = conv_kernel_grad(g, input.values(), grad_output.values());
  return make_result(g.kernel_shape(), std::move(gw), "conv2d_kernel_grad", {input, grad_output},
                     [stride](const Tensor& ggw, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = conv2d_input_grad(in[1], ggw, in[0].shape(), stride);
                       if (need[1]) r[1] = conv2d(in[0], ggw, stride);
                       return r;
                     });
}

}  // namespace nnd
