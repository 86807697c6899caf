#pragma once

#include <cmath>
#include <string>

#include "ulk/tensor.hpp"

namespace ulk {

// Layout transforms that turn non-image samples into B x C' x H x W maps.

/// Time series [B, L, D] -> [B*n, 1, L, D'].
///
/// D is split into n contiguous node groups of D/n features; each position of
/// each group goes through the same affine map (D/n -> D') and the result is
/// laid out with H = L and W = D', so H*W = L*D'. Output batch index is b*n + g.
template <typename Scalar>
Tensor<Scalar> embed_timeseries(const Tensor<Scalar>& data, Index nodes, const Tensor<Scalar>& proj_weight,
                                const Tensor<Scalar>& proj_bias) {
  if (data.rank() != 3) throw ShapeError("time series must be [B, L, D], got " + data.shape().to_string());
  const Index batch = data.dim(0), length = data.dim(1), features = data.dim(2);
  if (nodes < 1 || features % nodes != 0)
    throw ConfigError("feature dim " + std::to_string(features) + " is not divisible into " + std::to_string(nodes) + " nodes");
  const Index group = features / nodes;
  if (proj_weight.rank() != 2 || proj_weight.dim(1) != group)
    throw ShapeError("projection must be [D', D/n] = [*, " + std::to_string(group) + "], got " + proj_weight.shape().to_string());
  const Index latent = proj_weight.dim(0);
  if (proj_bias.shape() != Shape{latent}) throw ShapeError("projection bias must be [D']");

  Tensor<Scalar> out(Shape{batch * nodes, 1, length, latent});
  for (Index b = 0; b < batch; ++b)
    for (Index g = 0; g < nodes; ++g)
      for (Index l = 0; l < length; ++l)
        for (Index j = 0; j < latent; ++j) {
          Scalar acc = proj_bias(j);
          for (Index i = 0; i < group; ++i) acc += proj_weight(j, i) * data(b, l, g * group + i);
          out(b * nodes + g, 0, l, j) = acc;
        }
  return out;
}

/// Spectrogram [B, T, F] -> [B, 1, T, F].
template <typename Scalar>
Tensor<Scalar> embed_audio(const Tensor<Scalar>& data) {
  if (data.rank() != 3) throw ShapeError("audio must be [B, T, F], got " + data.shape().to_string());
  return reshape(data, Shape{data.dim(0), 1, data.dim(1), data.dim(2)});
}

/// Inverse of embed_audio.
template <typename Scalar>
Tensor<Scalar> squeeze_audio(const Tensor<Scalar>& map) {
  if (map.rank() != 4 || map.dim(1) != 1) throw ShapeError("audio map must be [B, 1, T, F], got " + map.shape().to_string());
  return reshape(map, Shape{map.dim(0), map.dim(2), map.dim(3)});
}

inline constexpr Index kPointCloudResolution = 224;

/// Point cloud [B, P, 3] -> [B, 3, R, R] orthographic density projections.
///
/// Channels are the (x, y), (x, z) and (y, z) planes, first coordinate along
/// rows. Each sample is centred on its bounding-box centre and scaled by its
/// largest extent into the unit box; every point adds one to its cell and each
/// channel is finally divided by its maximum.
template <typename Scalar>
Tensor<Scalar> embed_pointcloud(const Tensor<Scalar>& points, Index resolution = kPointCloudResolution) {
  if (points.rank() != 3 || points.dim(2) != 3) throw ShapeError("point cloud must be [B, P, 3], got " + points.shape().to_string());
  if (resolution < 1) throw ConfigError("projection resolution must be >= 1");
  for (Scalar v : points.data())
    if (!std::isfinite(v)) throw ConfigError("point cloud contains non-finite coordinates");
  const Index batch = points.dim(0), count = points.dim(1);
  constexpr Index kPlanes[3][2] = {{0, 1}, {0, 2}, {1, 2}};

  Tensor<Scalar> out(Shape{batch, 3, resolution, resolution});
  for (Index b = 0; b < batch; ++b) {
    Scalar lo[3], hi[3];
    for (Index a = 0; a < 3; ++a) lo[a] = hi[a] = points(b, 0, a);
    for (Index p = 1; p < count; ++p)
      for (Index a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], points(b, p, a));
        hi[a] = std::max(hi[a], points(b, p, a));
      }
    Scalar extent = 0;
    for (Index a = 0; a < 3; ++a) extent = std::max(extent, hi[a] - lo[a]);
    if (extent == Scalar(0)) extent = Scalar(1);

    auto cell = [&](Index p, Index a) {
      const Scalar centre = (lo[a] + hi[a]) / Scalar(2);
      const Scalar u = (points(b, p, a) - centre) / extent + Scalar(0.5);
      return std::clamp<Index>(static_cast<Index>(std::floor(u * Scalar(resolution))), 0, resolution - 1);
    };
    for (Index p = 0; p < count; ++p)
      for (Index ch = 0; ch < 3; ++ch) out(b, ch, cell(p, kPlanes[ch][0]), cell(p, kPlanes[ch][1])) += Scalar(1);
    for (Index ch = 0; ch < 3; ++ch) {
      Scalar* plane = out.ptr() + (b * 3 + ch) * resolution * resolution;
      const Scalar peak = *std::max_element(plane, plane + resolution * resolution);
      for (Index i = 0; i < resolution * resolution; ++i) plane[i] /= peak;
    }
  }
  return out;
}

/// Video [B, N_F, 3, h, w] -> [B, 3, sqrt(N_F) h, sqrt(N_F) w], frames tiled row-major.
template <typename Scalar>
Tensor<Scalar> embed_video(const Tensor<Scalar>& frames) {
  if (frames.rank() != 5) throw ShapeError("video must be [B, N_F, C, h, w], got " + frames.shape().to_string());
  const Index batch = frames.dim(0), nf = frames.dim(1), c = frames.dim(2), h = frames.dim(3), w = frames.dim(4);
  const Index grid = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(nf))));
  if (grid * grid != nf) throw ConfigError("frame count " + std::to_string(nf) + " is not a perfect square");

  Tensor<Scalar> out(Shape{batch, c, grid * h, grid * w});
  for (Index b = 0; b < batch; ++b)
    for (Index f = 0; f < nf; ++f)
      for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < h; ++y) {
          const Scalar* src = &frames(b, f, ch, y, 0);
          std::copy(src, src + w, &out(b, ch, (f / grid) * h + y, (f % grid) * w));
        }
  return out;
}

}  // namespace ulk
