#pragma once

#include <string>

#include "ulk/tensor.hpp"

namespace ulk {

enum class FusionPadding { kValid, kSame };

/// Asymmetric large-kernel fusion of token sequences X [L1, D] and Y [L2, D].
///
/// Y acts as a bank of D one-dimensional filters sliding along X's sequence
/// axis: Z[i, j] = sum_k X[i + k, j] * Y[k, j]. Valid mode gives L1 - L2 + 1
/// rows. Same mode zero-pads X by floor((L2-1)/2) before and ceil((L2-1)/2)
/// after, giving L1 rows.
///
/// Feature maps [H, W, C] can be fused by flattening them to [H*W, C] first.
template <typename Scalar>
Tensor<Scalar> asym_conv_fuse(const Tensor<Scalar>& x, const Tensor<Scalar>& y, FusionPadding padding = FusionPadding::kValid) {
  if (x.rank() != 2 || y.rank() != 2) throw ShapeError("fusion operands must be [L, D] matrices");
  if (x.dim(1) != y.dim(1))
    throw ShapeError("fusion operands disagree on D: " + x.shape().to_string() + " vs " + y.shape().to_string());
  const Index l1 = x.dim(0), l2 = y.dim(0), d = x.dim(1);
  Index before = 0, rows = 0;
  if (padding == FusionPadding::kValid) {
    if (l2 > l1) throw ConfigError("valid fusion needs L2 <= L1, got L1=" + std::to_string(l1) + " L2=" + std::to_string(l2));
    rows = l1 - l2 + 1;
  } else {
    before = (l2 - 1) / 2;
    rows = l1;
  }

  Tensor<Scalar> z(Shape{rows, d});
  for (Index i = 0; i < rows; ++i) {
    Scalar* out = &z(i, 0);
    for (Index k = 0; k < l2; ++k) {
      const Index src = i + k - before;
      if (src < 0 || src >= l1) continue;
      const Scalar* xr = &x(src, 0);
      const Scalar* yr = &y(k, 0);
      for (Index j = 0; j < d; ++j) out[j] += xr[j] * yr[j];
    }
  }
  return z;
}

}  // namespace ulk
