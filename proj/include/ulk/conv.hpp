#pragma once

#include <optional>
#include <string>

#include "ulk/tensor.hpp"

namespace ulk {

struct ConvParams {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
  Index groups = 1;

  bool operator==(const ConvParams&) const = default;
};

/// Weight [C_out, C_in/groups, k_h, k_w] plus an optional per-output-channel bias.
template <typename Scalar>
struct ConvKernel {
  Tensor<Scalar> weight;
  std::optional<Tensor<Scalar>> bias;

  Index out_channels() const { return weight.dim(0); }
  Index in_channels_per_group() const { return weight.dim(1); }
  Index size() const { return weight.dim(2); }

  bool operator==(const ConvKernel&) const = default;
};

/// Extent of a k-tap kernel sampled at dilation r.
constexpr Index equivalent_kernel_size(Index k, Index dilation) { return (k - 1) * dilation + 1; }

/// Padding that keeps H and W unchanged at stride 1: (k-1)r/2. Odd k only.
inline Index same_padding(Index k, Index dilation = 1) {
  if (k < 1 || k % 2 == 0) throw ConfigError("same padding needs an odd kernel size, got " + std::to_string(k));
  return (k - 1) * dilation / 2;
}

inline Index conv_output_extent(Index in, Index k, const ConvParams& p) {
  return (in + 2 * p.padding - equivalent_kernel_size(k, p.dilation)) / p.stride + 1;
}

namespace detail {

inline void check_params(const ConvParams& p) {
  if (p.stride < 1 || p.dilation < 1 || p.groups < 1 || p.padding < 0)
    throw ConfigError("invalid conv params: stride=" + std::to_string(p.stride) + " padding=" + std::to_string(p.padding) +
                      " dilation=" + std::to_string(p.dilation) + " groups=" + std::to_string(p.groups));
}

/// Validates a forward convolution and returns the output shape.
template <typename Scalar>
Shape conv_output_shape(const Shape& in, const ConvKernel<Scalar>& kernel, const ConvParams& p) {
  check_params(p);
  if (in.rank() != 4) throw ShapeError("conv expects a 4-D input, got " + in.to_string());
  const Tensor<Scalar>& w = kernel.weight;
  if (w.rank() != 4) throw ShapeError("conv expects a 4-D weight, got " + w.shape().to_string());
  const Index c_in = in[1];
  const Index c_out = w.dim(0);
  if (c_in % p.groups != 0 || c_out % p.groups != 0)
    throw ConfigError("channels (" + std::to_string(c_in) + " in, " + std::to_string(c_out) +
                      " out) not divisible by groups " + std::to_string(p.groups));
  if (w.dim(1) != c_in / p.groups)
    throw ShapeError("weight " + w.shape().to_string() + " does not match " + std::to_string(c_in) + " input channels / " +
                     std::to_string(p.groups) + " groups");
  if (kernel.bias && kernel.bias->shape() != Shape{c_out})
    throw ShapeError("bias " + kernel.bias->shape().to_string() + " does not match " + std::to_string(c_out) + " outputs");
  const Index ext_h = equivalent_kernel_size(w.dim(2), p.dilation);
  const Index ext_w = equivalent_kernel_size(w.dim(3), p.dilation);
  if (ext_h > in[2] + 2 * p.padding || ext_w > in[3] + 2 * p.padding)
    throw ShapeError("effective kernel extent " + std::to_string(ext_h) + "x" + std::to_string(ext_w) +
                     " exceeds padded input " + in.to_string() + " with padding " + std::to_string(p.padding));
  return Shape{in[0], c_out, conv_output_extent(in[2], w.dim(2), p), conv_output_extent(in[3], w.dim(3), p)};
}

}  // namespace detail

/// Reference 2-D cross-correlation with stride, padding, dilation and groups.
template <typename Scalar>
Tensor<Scalar> conv2d_direct(const Tensor<Scalar>& x, const ConvKernel<Scalar>& kernel, const ConvParams& p) {
  const Shape out_shape = detail::conv_output_shape(x.shape(), kernel, p);
  const Index batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index c_out = out_shape[1], ho = out_shape[2], wo = out_shape[3];
  const Index kh = kernel.weight.dim(2), kw = kernel.weight.dim(3);
  const Index in_per_group = c_in / p.groups;
  const Index out_per_group = c_out / p.groups;

  Tensor<Scalar> y(out_shape);
  for (Index b = 0; b < batch; ++b) {
    for (Index oc = 0; oc < c_out; ++oc) {
      const Index group = oc / out_per_group;
      const Scalar bias = kernel.bias ? (*kernel.bias)(oc) : Scalar(0);
      for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox) {
          Scalar acc = bias;
          for (Index icl = 0; icl < in_per_group; ++icl) {
            const Index ic = group * in_per_group + icl;
            for (Index ky = 0; ky < kh; ++ky) {
              const Index iy = oy * p.stride - p.padding + ky * p.dilation;
              if (iy < 0 || iy >= h) continue;
              for (Index kx = 0; kx < kw; ++kx) {
                const Index ix = ox * p.stride - p.padding + kx * p.dilation;
                if (ix < 0 || ix >= w) continue;
                acc += x(b, ic, iy, ix) * kernel.weight(oc, icl, ky, kx);
              }
            }
          }
          y(b, oc, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

/// Transpose convolution (no padding, groups = 1).
///
/// x is [B, C_in, H, W]; kernel.weight is [C_in, C_out, k_h, k_w] as in the
/// usual deep-learning layout. Each input pixel scatters a scaled copy of the
/// kernel at stride spacing, so a 1x1 identity kernel at stride r inserts
/// r - 1 zeros between neighbouring pixels.
template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& x, const ConvKernel<Scalar>& kernel, Index stride) {
  if (stride < 1) throw ConfigError("transpose conv stride must be >= 1, got " + std::to_string(stride));
  if (x.rank() != 4) throw ShapeError("conv_transpose2d expects a 4-D input, got " + x.shape().to_string());
  const Tensor<Scalar>& w = kernel.weight;
  if (w.rank() != 4 || w.dim(0) != x.dim(1))
    throw ShapeError("transpose weight " + w.shape().to_string() + " does not match input " + x.shape().to_string());
  const Index batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index c_out = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (kernel.bias && kernel.bias->shape() != Shape{c_out}) throw ShapeError("transpose bias does not match C_out");

  Tensor<Scalar> y(Shape{batch, c_out, (h - 1) * stride + kh, (wd - 1) * stride + kw});
  for (Index b = 0; b < batch; ++b) {
    if (kernel.bias)
      for (Index oc = 0; oc < c_out; ++oc)
        for (Index oy = 0; oy < y.dim(2); ++oy)
          for (Index ox = 0; ox < y.dim(3); ++ox) y(b, oc, oy, ox) = (*kernel.bias)(oc);
    for (Index ic = 0; ic < c_in; ++ic)
      for (Index iy = 0; iy < h; ++iy)
        for (Index ix = 0; ix < wd; ++ix) {
          const Scalar v = x(b, ic, iy, ix);
          for (Index oc = 0; oc < c_out; ++oc)
            for (Index ky = 0; ky < kh; ++ky)
              for (Index kx = 0; kx < kw; ++kx) y(b, oc, iy * stride + ky, ix * stride + kx) += v * w(ic, oc, ky, kx);
        }
  }
  return y;
}

/// Gradient of <grad_out, conv2d_direct(x, kernel, p)> with respect to x.
/// The bias does not contribute.
template <typename Scalar>
Tensor<Scalar> conv2d_input_grad(const Tensor<Scalar>& grad_out, const ConvKernel<Scalar>& kernel, const ConvParams& p,
                                 const Shape& input_shape) {
  const Shape expected = detail::conv_output_shape(input_shape, kernel, p);
  if (grad_out.shape() != expected)
    throw ShapeError("grad_out " + grad_out.shape().to_string() + " does not match conv output " + expected.to_string());
  const Index batch = input_shape[0], c_in = input_shape[1], h = input_shape[2], w = input_shape[3];
  const Index c_out = expected[1], ho = expected[2], wo = expected[3];
  const Index kh = kernel.weight.dim(2), kw = kernel.weight.dim(3);
  const Index in_per_group = c_in / p.groups;
  const Index out_per_group = c_out / p.groups;

  Tensor<Scalar> dx(input_shape);
  for (Index b = 0; b < batch; ++b)
    for (Index oc = 0; oc < c_out; ++oc) {
      const Index group = oc / out_per_group;
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox) {
          const Scalar g = grad_out(b, oc, oy, ox);
          if (g == Scalar(0)) continue;
          for (Index icl = 0; icl < in_per_group; ++icl) {
            const Index ic = group * in_per_group + icl;
            for (Index ky = 0; ky < kh; ++ky) {
              const Index iy = oy * p.stride - p.padding + ky * p.dilation;
              if (iy < 0 || iy >= h) continue;
              for (Index kx = 0; kx < kw; ++kx) {
                const Index ix = ox * p.stride - p.padding + kx * p.dilation;
                if (ix < 0 || ix >= w) continue;
                dx(b, ic, iy, ix) += g * kernel.weight(oc, icl, ky, kx);
              }
            }
          }
        }
    }
  return dx;
}

}  // namespace ulk
