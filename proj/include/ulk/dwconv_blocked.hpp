#pragma once

#include <algorithm>
#include <vector>

#include "ulk/conv.hpp"
#include "ulk/parallel.hpp"

namespace ulk {

/// Output tile extents for the blocked depth-wise path.
struct TileConfig {
  Index tile_h = 8;
  Index tile_w = 64;
};

namespace detail {

template <typename Scalar>
inline void axpy_row(Scalar* __restrict dst, const Scalar* __restrict src, Scalar w, Index n) {
  for (Index i = 0; i < n; ++i) dst[i] += w * src[i];
}

template <typename Scalar>
inline void axpy_row_strided(Scalar* __restrict dst, const Scalar* __restrict src, Scalar w, Index n, Index stride) {
  for (Index i = 0; i < n; ++i) dst[i] += w * src[i * stride];
}

/// Register-blocked unit-stride microkernel: kLanes output columns of one
/// row stay in registers across all kh * kw taps and are stored once.
inline constexpr Index kLanes = 16;

template <typename Scalar>
inline void dw_row_chunk(Scalar* __restrict dst, const Scalar* __restrict src, Index src_pitch, const Scalar* __restrict taps,
                         Index kh, Index kw, Index r) {
  Scalar acc[kLanes];
  for (Index j = 0; j < kLanes; ++j) acc[j] = dst[j];
  for (Index ky = 0; ky < kh; ++ky) {
    const Scalar* row = src + ky * r * src_pitch;
    const Scalar* tap_row = taps + ky * kw;
    for (Index kx = 0; kx < kw; ++kx) {
      const Scalar t = tap_row[kx];
      const Scalar* in = row + kx * r;
      for (Index j = 0; j < kLanes; ++j) acc[j] += t * in[j];
    }
  }
  for (Index j = 0; j < kLanes; ++j) dst[j] = acc[j];
}

/// kRows x kLanes output block for unit stride and dilation. Each loaded
/// input vector is reused by every output row whose window covers it.
inline constexpr Index kRows = 4;

template <typename Scalar>
inline void dw_block(Scalar* __restrict dst, Index dst_pitch, const Scalar* __restrict src, Index src_pitch,
                     const Scalar* __restrict taps, Index kh, Index kw) {
  Scalar acc[kRows][kLanes];
  for (Index o = 0; o < kRows; ++o)
    for (Index j = 0; j < kLanes; ++j) acc[o][j] = dst[o * dst_pitch + j];
  for (Index iy = 0; iy < kh + kRows - 1; ++iy) {
    const Scalar* row = src + iy * src_pitch;
    const Index o_lo = std::max<Index>(0, iy - kh + 1), o_hi = std::min<Index>(kRows, iy + 1);
    for (Index kx = 0; kx < kw; ++kx) {
      Scalar v[kLanes];
      for (Index j = 0; j < kLanes; ++j) v[j] = row[kx + j];
      if (o_lo == 0 && o_hi == kRows) {
        for (Index o = 0; o < kRows; ++o) {
          const Scalar t = taps[(iy - o) * kw + kx];
          for (Index j = 0; j < kLanes; ++j) acc[o][j] += t * v[j];
        }
      } else {
        for (Index o = o_lo; o < o_hi; ++o) {
          const Scalar t = taps[(iy - o) * kw + kx];
          for (Index j = 0; j < kLanes; ++j) acc[o][j] += t * v[j];
        }
      }
    }
  }
  for (Index o = 0; o < kRows; ++o)
    for (Index j = 0; j < kLanes; ++j) dst[o * dst_pitch + j] = acc[o][j];
}

}  // namespace detail

/// Depth-wise convolution as a tiled implicit GEMM.
///
/// Each (batch, channel) plane is cut into tile_h x tile_w output tiles. A
/// tile gathers its receptive window (halo included, padding materialized
/// as zeros) into a small local buffer that stays cache resident, then
/// accumulates every kernel tap as a scaled row update whose innermost loop
/// runs over contiguous output columns. No im2col matrix is ever formed: the
/// "columns" are addressed implicitly through the tap offsets.
///
/// Planes are distributed over parallel_for; the accumulation order inside a
/// tile is fixed, so results are independent of the worker count.
template <typename Scalar>
Tensor<Scalar> dwconv2d_blocked(const Tensor<Scalar>& x, const ConvKernel<Scalar>& kernel, const ConvParams& p,
                                const TileConfig& tiles = {}) {
  if (x.rank() != 4) throw ShapeError("dwconv2d_blocked expects a 4-D input, got " + x.shape().to_string());
  const Index channels = x.dim(1);
  if (p.groups != channels || kernel.weight.dim(0) != channels || kernel.weight.dim(1) != 1)
    throw ConfigError("dwconv2d_blocked requires a depth-wise configuration (groups = C_in = C_out), got groups=" +
                      std::to_string(p.groups) + " weight " + kernel.weight.shape().to_string() + " input " +
                      x.shape().to_string());
  if (tiles.tile_h < 1 || tiles.tile_w < 1) throw ConfigError("tile sizes must be >= 1");
  const Shape out_shape = detail::conv_output_shape(x.shape(), kernel, p);

  const Index h = x.dim(2), w = x.dim(3);
  const Index ho = out_shape[2], wo = out_shape[3];
  const Index kh = kernel.weight.dim(2), kw = kernel.weight.dim(3);
  const Index s = p.stride, r = p.dilation;
  const Index ext_h = equivalent_kernel_size(kh, r);
  const Index ext_w = equivalent_kernel_size(kw, r);

  Tensor<Scalar> y(out_shape);
  const Scalar* in_base = x.ptr();
  Scalar* out_base = y.ptr();
  const Scalar* w_base = kernel.weight.ptr();

  parallel_for(x.dim(0) * channels, [&](Index plane) {
    const Index c = plane % channels;
    const Scalar* in = in_base + plane * h * w;
    Scalar* out = out_base + plane * ho * wo;
    const Scalar* taps = w_base + c * kh * kw;
    const Scalar bias = kernel.bias ? (*kernel.bias)(c) : Scalar(0);

    const Index max_win_h = (std::min(tiles.tile_h, ho) - 1) * s + ext_h;
    const Index max_win_w = (std::min(tiles.tile_w, wo) - 1) * s + ext_w;
    std::vector<Scalar> window(static_cast<std::size_t>(max_win_h * max_win_w));
    std::vector<Scalar> acc(static_cast<std::size_t>(std::min(tiles.tile_h, ho) * std::min(tiles.tile_w, wo)));

    for (Index oy0 = 0; oy0 < ho; oy0 += tiles.tile_h) {
      const Index th = std::min(tiles.tile_h, ho - oy0);
      const Index win_h = (th - 1) * s + ext_h;
      const Index iy0 = oy0 * s - p.padding;
      for (Index ox0 = 0; ox0 < wo; ox0 += tiles.tile_w) {
        const Index tw = std::min(tiles.tile_w, wo - ox0);
        const Index win_w = (tw - 1) * s + ext_w;
        const Index ix0 = ox0 * s - p.padding;

        // Gather the receptive window; out-of-image cells are padding zeros.
        const Index col_lo = std::clamp<Index>(-ix0, 0, win_w);
        const Index col_hi = std::clamp<Index>(w - ix0, 0, win_w);
        for (Index wy = 0; wy < win_h; ++wy) {
          Scalar* dst = window.data() + wy * win_w;
          const Index iy = iy0 + wy;
          if (iy < 0 || iy >= h || col_lo >= col_hi) {
            std::fill(dst, dst + win_w, Scalar(0));
            continue;
          }
          std::fill(dst, dst + col_lo, Scalar(0));
          std::copy(in + (iy * w + ix0 + col_lo), in + (iy * w + ix0 + col_hi), dst + col_lo);
          std::fill(dst + col_hi, dst + win_w, Scalar(0));
        }

        std::fill(acc.begin(), acc.begin() + th * tw, bias);
        // Full lane chunks go through the microkernel; the ragged right edge
        // (and every strided case) falls back to row updates.
        const Index vec_w = s == 1 ? tw / detail::kLanes * detail::kLanes : 0;
        Index ty = 0;
        if (r == 1)
          for (; ty + detail::kRows <= th; ty += detail::kRows)
            for (Index j = 0; j < vec_w; j += detail::kLanes)
              detail::dw_block(acc.data() + ty * tw + j, tw, window.data() + ty * win_w + j, win_w, taps, kh, kw);
        for (; ty < th; ++ty)
          for (Index j = 0; j < vec_w; j += detail::kLanes)
            detail::dw_row_chunk(acc.data() + ty * tw + j, window.data() + ty * win_w + j, win_w, taps, kh, kw, r);
        if (vec_w < tw) {
          for (Index ky = 0; ky < kh; ++ky) {
            for (Index ty = 0; ty < th; ++ty) {
              const Scalar* src_row = window.data() + (ty * s + ky * r) * win_w + vec_w * s;
              Scalar* dst_row = acc.data() + ty * tw + vec_w;
              for (Index kx = 0; kx < kw; ++kx) {
                const Scalar tap = taps[ky * kw + kx];
                if (s == 1)
                  detail::axpy_row(dst_row, src_row + kx * r, tap, tw - vec_w);
                else
                  detail::axpy_row_strided(dst_row, src_row + kx * r, tap, tw - vec_w, s);
              }
            }
          }
        }

        for (Index ty = 0; ty < th; ++ty)
          std::copy(acc.data() + ty * tw, acc.data() + (ty + 1) * tw, out + (oy0 + ty) * wo + ox0);
      }
    }
  });
  return y;
}

}  // namespace ulk
