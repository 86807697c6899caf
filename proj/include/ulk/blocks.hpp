#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ulk/dwconv_blocked.hpp"
#include "ulk/reparam.hpp"

namespace ulk {

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Views a rank-2 tensor as a row-major matrix.
template <typename Scalar>
Eigen::Map<const RowMajorMatrix<Scalar>> as_matrix(const Tensor<Scalar>& t) {
  if (t.rank() != 2) throw ShapeError("expected a matrix, got " + t.shape().to_string());
  return {t.ptr(), t.dim(0), t.dim(1)};
}

template <typename Scalar>
Eigen::Map<const Vector<Scalar>> as_vector(const Tensor<Scalar>& t) {
  return {t.ptr(), t.size()};
}

enum class GeluMode { kTanh, kErf };

template <typename Scalar>
Scalar gelu(Scalar v, GeluMode mode = GeluMode::kTanh) {
  if (mode == GeluMode::kErf) return Scalar(0.5) * v * (Scalar(1) + std::erf(v / std::sqrt(Scalar(2))));
  const Scalar c = std::sqrt(Scalar(2) / Scalar(M_PI));
  return Scalar(0.5) * v * (Scalar(1) + std::tanh(c * (v + Scalar(0.044715) * v * v * v)));
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x, GeluMode mode = GeluMode::kTanh) {
  Tensor<Scalar> y(x.shape());
  for (Index i = 0; i < x.size(); ++i) y.ptr()[i] = gelu(x.ptr()[i], mode);
  return y;
}

/// 1x1 convolution as one GEMM per image: [C_out, C_in] x [C_in, H*W].
template <typename Scalar>
Tensor<Scalar> pointwise_conv(const Tensor<Scalar>& x, const ConvKernel<Scalar>& kernel) {
  const Tensor<Scalar>& w = kernel.weight;
  if (x.rank() != 4) throw ShapeError("pointwise conv expects a 4-D input, got " + x.shape().to_string());
  if (w.rank() != 4 || w.dim(2) != 1 || w.dim(3) != 1 || w.dim(1) != x.dim(1))
    throw ShapeError("pointwise weight " + w.shape().to_string() + " does not match input " + x.shape().to_string());
  const Index c_in = x.dim(1), c_out = w.dim(0), hw = x.dim(2) * x.dim(3);
  Eigen::Map<const RowMajorMatrix<Scalar>> weight(w.ptr(), c_out, c_in);
  Tensor<Scalar> y(Shape{x.dim(0), c_out, x.dim(2), x.dim(3)});
  for (Index b = 0; b < x.dim(0); ++b) {
    Eigen::Map<const RowMajorMatrix<Scalar>> in(x.ptr() + b * c_in * hw, c_in, hw);
    Eigen::Map<RowMajorMatrix<Scalar>> out(y.ptr() + b * c_out * hw, c_out, hw);
    out.noalias() = weight * in;
    if (kernel.bias) out.colwise() += as_vector(*kernel.bias);
  }
  return y;
}

/// Squeeze-and-excitation with a fixed 1/4 channel reduction.
template <typename Scalar>
struct SeParams {
  Tensor<Scalar> fc1_weight;  // [C/4, C]
  Tensor<Scalar> fc1_bias;    // [C/4]
  Tensor<Scalar> fc2_weight;  // [C, C/4]
  Tensor<Scalar> fc2_bias;    // [C]

  static constexpr Index kReduction = 4;

  Index channels() const { return fc1_weight.dim(1); }

  void validate() const {
    const Index c = channels();
    if (c % kReduction != 0) throw ConfigError("SE channels must be divisible by 4, got " + std::to_string(c));
    const Index r = c / kReduction;
    if (fc1_weight.shape() != Shape{r, c} || fc1_bias.shape() != Shape{r} || fc2_weight.shape() != Shape{c, r} ||
        fc2_bias.shape() != Shape{c})
      throw ShapeError("SE parameter shapes inconsistent for " + std::to_string(c) + " channels");
  }

  static SeParams zeros(Index c) {
    if (c % kReduction != 0) throw ConfigError("SE channels must be divisible by 4, got " + std::to_string(c));
    const Index r = c / kReduction;
    return {Tensor<Scalar>(Shape{r, c}), Tensor<Scalar>(Shape{r}), Tensor<Scalar>(Shape{c, r}), Tensor<Scalar>(Shape{c})};
  }

  static SeParams random(Index c, Rng& rng, double weight_std, bool random_bias) {
    SeParams p = zeros(c);
    p.fc1_weight = trunc_normal<Scalar>(p.fc1_weight.shape(), rng, weight_std);
    p.fc2_weight = trunc_normal<Scalar>(p.fc2_weight.shape(), rng, weight_std);
    if (random_bias) {
      p.fc1_bias = random_normal<Scalar>(p.fc1_bias.shape(), rng, 0.1);
      p.fc2_bias = random_normal<Scalar>(p.fc2_bias.shape(), rng, 0.1);
    }
    return p;
  }

  Index param_count() const { return fc1_weight.size() + fc1_bias.size() + fc2_weight.size() + fc2_bias.size(); }

  bool operator==(const SeParams&) const = default;
};

/// Per-channel gate s = sigmoid(fc2(relu(fc1(mean_hw(x))))).
template <typename Scalar>
Tensor<Scalar> se_gates(const Tensor<Scalar>& x, const SeParams<Scalar>& p) {
  p.validate();
  if (x.rank() != 4 || x.dim(1) != p.channels())
    throw ShapeError("SE over " + std::to_string(p.channels()) + " channels cannot take " + x.shape().to_string());
  const Tensor<Scalar> pooled = reduce_spatial_mean(x);
  const auto pooled_m = as_matrix(pooled);
  Tensor<Scalar> gates(Shape{x.dim(0), x.dim(1)});
  for (Index b = 0; b < x.dim(0); ++b) {
    const Vector<Scalar> hidden =
        (as_matrix(p.fc1_weight) * pooled_m.row(b).transpose() + as_vector(p.fc1_bias)).cwiseMax(Scalar(0));
    const Vector<Scalar> logits = as_matrix(p.fc2_weight) * hidden + as_vector(p.fc2_bias);
    for (Index c = 0; c < x.dim(1); ++c) gates(b, c) = Scalar(1) / (Scalar(1) + std::exp(-logits(c)));
  }
  return gates;
}

template <typename Scalar>
Tensor<Scalar> se_forward(const Tensor<Scalar>& x, const SeParams<Scalar>& p) {
  const Tensor<Scalar> gates = se_gates(x, p);
  const Index hw = x.dim(2) * x.dim(3);
  Tensor<Scalar> y(x.shape());
  for (Index plane = 0; plane < x.dim(0) * x.dim(1); ++plane) {
    const Scalar g = gates.ptr()[plane];
    for (Index i = 0; i < hw; ++i) y.ptr()[plane * hw + i] = x.ptr()[plane * hw + i] * g;
  }
  return y;
}

/// Global response normalization with learned scale/shift and residual.
template <typename Scalar>
struct GrnParams {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Scalar delta = Scalar(1e-6);

  Index channels() const { return gamma.size(); }

  static GrnParams zeros(Index c) { return {Tensor<Scalar>(Shape{c}), Tensor<Scalar>(Shape{c})}; }

  bool operator==(const GrnParams&) const = default;
};

/// G_c = ||x_c||_2 over H x W; N_c = G_c / (mean_c G + delta);
/// out = gamma_c * (x_c * N_c) + beta_c + x_c.
template <typename Scalar>
Tensor<Scalar> grn_forward(const Tensor<Scalar>& x, const GrnParams<Scalar>& p) {
  if (x.rank() != 4 || x.dim(1) != p.channels() || p.beta.size() != p.channels())
    throw ShapeError("GRN over " + std::to_string(p.channels()) + " channels cannot take " + x.shape().to_string());
  const Index c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<Scalar> y(x.shape());
  for (Index b = 0; b < x.dim(0); ++b) {
    Eigen::Map<const RowMajorMatrix<Scalar>> in(x.ptr() + b * c * hw, c, hw);
    Eigen::Map<RowMajorMatrix<Scalar>> out(y.ptr() + b * c * hw, c, hw);
    const Vector<Scalar> norms = in.rowwise().norm();
    const Vector<Scalar> normalized = norms / (norms.mean() + p.delta);
    const Vector<Scalar> mul = as_vector(p.gamma).cwiseProduct(normalized).array() + Scalar(1);
    out = (mul.asDiagonal() * in).colwise() + as_vector(p.beta);
  }
  return y;
}

/// expand (1x1, C -> eC) -> GELU -> GRN -> reduce (1x1, eC -> C).
template <typename Scalar>
struct FfnParams {
  ConvKernel<Scalar> expand;
  GrnParams<Scalar> grn;
  ConvKernel<Scalar> reduce;

  Index channels() const { return expand.weight.dim(1); }
  Index hidden() const { return expand.weight.dim(0); }

  void validate() const {
    const Index c = channels(), h = hidden();
    if (h < c) throw ConfigError("FFN expansion ratio must be >= 1");
    if (expand.weight.shape() != Shape{h, c, 1, 1} || reduce.weight.shape() != Shape{c, h, 1, 1} || grn.channels() != h)
      throw ShapeError("FFN shapes do not chain: expand " + expand.weight.shape().to_string() + ", reduce " +
                       reduce.weight.shape().to_string() + ", GRN " + std::to_string(grn.channels()));
  }

  static FfnParams random(Index c, Index ratio, Rng& rng, double weight_std, bool random_grn) {
    const Index h = c * ratio;
    FfnParams p{{trunc_normal<Scalar>(Shape{h, c, 1, 1}, rng, weight_std), Tensor<Scalar>(Shape{h})},
                GrnParams<Scalar>::zeros(h),
                {trunc_normal<Scalar>(Shape{c, h, 1, 1}, rng, weight_std), std::nullopt}};
    if (random_grn) {
      p.grn.gamma = random_normal<Scalar>(Shape{h}, rng, 0.5);
      p.grn.beta = random_normal<Scalar>(Shape{h}, rng, 0.5);
      p.expand.bias = random_normal<Scalar>(Shape{h}, rng, 0.1);
    }
    return p;
  }

  bool operator==(const FfnParams&) const = default;
};

template <typename Scalar>
Tensor<Scalar> ffn_forward(const Tensor<Scalar>& x, const FfnParams<Scalar>& p, GeluMode mode = GeluMode::kTanh) {
  p.validate();
  return pointwise_conv(grn_forward(gelu(pointwise_conv(x, p.expand), mode), p.grn), p.reduce);
}

enum class BlockKind { kLarK, kSmaK };

inline const char* to_string(BlockKind k) { return k == BlockKind::kLarK ? "LarK" : "SmaK"; }

/// One network block.
///
/// Before merging, a LarK block holds its Dilated Reparam Block in `reparam`
/// and a SmaK block its 3x3 depth-wise kernel in `dw`; both carry the BN
/// after the spatial conv and the BN after the FFN. Merging leaves only `dw`
/// (with bias) and folds the FFN BN into the reduce layer.
template <typename Scalar>
struct BlockSpec {
  BlockKind kind = BlockKind::kSmaK;
  std::optional<DilatedReparamBlock<Scalar>> reparam;
  std::optional<ConvKernel<Scalar>> dw;
  std::optional<BatchNormParams<Scalar>> conv_bn;
  SeParams<Scalar> se;
  FfnParams<Scalar> ffn;
  std::optional<BatchNormParams<Scalar>> ffn_bn;

  Index channels() const { return se.channels(); }
  bool merged() const { return !reparam && !conv_bn && !ffn_bn; }
  Index kernel_size() const { return reparam ? reparam->config.kernel_size : dw->weight.dim(2); }

  void validate() const {
    const Index c = channels();
    if (reparam.has_value() == dw.has_value()) throw ConfigError("block must hold exactly one of reparam / dw kernel");
    if (kind == BlockKind::kSmaK && (reparam || dw->weight.dim(2) != 3))
      throw ConfigError("SmaK block conv must be a 3x3 depth-wise kernel");
    if (reparam) {
      reparam->validate();
      if (reparam->channels() != c) throw ShapeError("reparam channels do not match block channels");
    } else {
      const Index k = dw->weight.dim(2);
      if (dw->weight.shape() != Shape{c, 1, k, k} || k % 2 == 0)
        throw ShapeError("block kernel " + dw->weight.shape().to_string() + " is not an odd depth-wise kernel");
    }
    if (conv_bn && conv_bn->channels() != c) throw ShapeError("conv BN channel mismatch");
    if (ffn_bn && ffn_bn->channels() != c) throw ShapeError("FFN BN channel mismatch");
    se.validate();
    ffn.validate();
    if (ffn.channels() != c) throw ShapeError("FFN channels do not match block channels");
  }

  Index param_count() const {
    auto kernel_count = [](const ConvKernel<Scalar>& k) { return k.weight.size() + (k.bias ? k.bias->size() : 0); };
    auto bn_count = [](const BatchNormParams<Scalar>& bn) { return 2 * bn.channels(); };
    Index n = 0;
    if (reparam) {
      n += kernel_count(reparam->main) + bn_count(reparam->main_bn);
      for (std::size_t i = 0; i < reparam->branches.size(); ++i)
        n += kernel_count(reparam->branches[i]) + bn_count(reparam->branch_bns[i]);
    } else {
      n += kernel_count(*dw);
    }
    if (conv_bn) n += bn_count(*conv_bn);
    n += se.param_count();
    n += kernel_count(ffn.expand) + 2 * ffn.grn.channels() + kernel_count(ffn.reduce);
    if (ffn_bn) n += bn_count(*ffn_bn);
    return n;
  }

  bool operator==(const BlockSpec&) const = default;
};

/// Initialization knobs for random blocks. Standard init uses identity BNs
/// and a zero GRN; `random_norms` randomizes every normalization and bias so
/// that merge checks exercise all folded terms.
struct InitOptions {
  double weight_std = 0.02;
  bool random_norms = false;
};

template <typename Scalar>
BlockSpec<Scalar> random_block(BlockKind kind, Index channels, const DilatedReparamConfig& cfg, Index ffn_ratio, Rng& rng,
                               const InitOptions& opts = {}) {
  auto make_bn = [&] {
    return opts.random_norms ? BatchNormParams<Scalar>::random(channels, rng) : BatchNormParams<Scalar>::identity(channels);
  };
  BlockSpec<Scalar> spec;
  spec.kind = kind;
  if (kind == BlockKind::kLarK)
    spec.reparam = DilatedReparamBlock<Scalar>::random(cfg, channels, rng, opts.weight_std, opts.random_norms);
  else
    spec.dw = ConvKernel<Scalar>{trunc_normal<Scalar>(Shape{channels, 1, 3, 3}, rng, opts.weight_std), std::nullopt};
  spec.conv_bn = make_bn();
  spec.se = SeParams<Scalar>::random(channels, rng, opts.weight_std, opts.random_norms);
  spec.ffn = FfnParams<Scalar>::random(channels, ffn_ratio, rng, opts.weight_std, opts.random_norms);
  spec.ffn_bn = make_bn();
  return spec;
}

/// y1 = x + SE(BN(DWConv(x))); y2 = y1 + BN(FFN(y1)).
template <typename Scalar>
Tensor<Scalar> block_forward(const Tensor<Scalar>& x, const BlockSpec<Scalar>& spec, GeluMode mode = GeluMode::kTanh) {
  spec.validate();
  if (x.rank() != 4 || x.dim(1) != spec.channels())
    throw ShapeError("block over " + std::to_string(spec.channels()) + " channels cannot take " + x.shape().to_string());
  const Index c = spec.channels();
  Tensor<Scalar> mixed = spec.reparam ? dilated_reparam_forward(x, *spec.reparam)
                                      : dwconv2d_blocked(x, *spec.dw, {1, same_padding(spec.dw->weight.dim(2)), 1, c});
  if (spec.conv_bn) mixed = batch_norm(mixed, *spec.conv_bn);
  Tensor<Scalar> y1 = x + se_forward(mixed, spec.se);
  Tensor<Scalar> f = ffn_forward(y1, spec.ffn, mode);
  if (spec.ffn_bn) f = batch_norm(f, *spec.ffn_bn);
  y1.array() += f.array();
  return y1;
}

/// Deployment form of a block; forward-equivalent to the input spec.
template <typename Scalar>
BlockSpec<Scalar> merge_block_for_inference(const BlockSpec<Scalar>& spec) {
  spec.validate();
  if (spec.merged()) return spec;
  BlockSpec<Scalar> out = spec;
  ConvKernel<Scalar> kernel = spec.reparam ? merge_dilated_reparam_block(*spec.reparam) : *spec.dw;
  if (spec.conv_bn) kernel = fuse_bn(kernel, *spec.conv_bn);
  out.reparam.reset();
  out.dw = std::move(kernel);
  out.conv_bn.reset();
  if (spec.ffn_bn) out.ffn.reduce = fuse_bn(spec.ffn.reduce, *spec.ffn_bn);
  out.ffn_bn.reset();
  return out;
}

/// Stride-2 3x3 conv with optional BN; one stage of a downsampling layer.
template <typename Scalar>
struct ConvBn {
  ConvKernel<Scalar> conv;
  ConvParams params{2, 1, 1, 1};
  std::optional<BatchNormParams<Scalar>> bn;

  bool operator==(const ConvBn&) const = default;
};

/// Stem (index 0): 3 -> C/2 -> C through two stride-2 convs with BN and a GELU
/// in between. Inter-stage layers (index >= 1): one stride-2 conv C -> 2C + BN.
template <typename Scalar>
struct DownsampleParams {
  std::vector<ConvBn<Scalar>> layers;

  Index in_channels() const { return layers.front().conv.weight.dim(1); }
  Index out_channels() const { return layers.back().conv.weight.dim(0); }

  Index param_count() const {
    Index n = 0;
    for (const auto& l : layers) {
      n += l.conv.weight.size() + (l.conv.bias ? l.conv.bias->size() : 0);
      if (l.bn) n += 2 * l.bn->channels();
    }
    return n;
  }

  static DownsampleParams random_stem(Index channels, Rng& rng, const InitOptions& opts = {}) {
    if (channels % 2 != 0) throw ConfigError("stem width must be even, got " + std::to_string(channels));
    const Index mid = channels / 2;
    auto bn = [&](Index c) {
      return opts.random_norms ? BatchNormParams<Scalar>::random(c, rng) : BatchNormParams<Scalar>::identity(c);
    };
    DownsampleParams p;
    p.layers.push_back({{trunc_normal<Scalar>(Shape{mid, 3, 3, 3}, rng, opts.weight_std), std::nullopt}, {2, 1, 1, 1}, bn(mid)});
    p.layers.push_back(
        {{trunc_normal<Scalar>(Shape{channels, mid, 3, 3}, rng, opts.weight_std), std::nullopt}, {2, 1, 1, 1}, bn(channels)});
    return p;
  }

  static DownsampleParams random_transition(Index in, Index out, Rng& rng, const InitOptions& opts = {}) {
    DownsampleParams p;
    p.layers.push_back({{trunc_normal<Scalar>(Shape{out, in, 3, 3}, rng, opts.weight_std), std::nullopt},
                        {2, 1, 1, 1},
                        opts.random_norms ? BatchNormParams<Scalar>::random(out, rng) : BatchNormParams<Scalar>::identity(out)});
    return p;
  }

  bool operator==(const DownsampleParams&) const = default;
};

template <typename Scalar>
Tensor<Scalar> downsample_forward(const Tensor<Scalar>& x, Index stage_index, const DownsampleParams<Scalar>& weights,
                                  GeluMode mode = GeluMode::kTanh) {
  if (x.rank() != 4) throw ShapeError("downsample expects a 4-D input, got " + x.shape().to_string());
  if (x.dim(2) < 2 || x.dim(3) < 2)
    throw ShapeError("downsample needs H, W >= 2, got " + x.shape().to_string());
  if (weights.layers.empty()) throw ConfigError("downsample has no layers");
  const std::size_t expected_layers = stage_index == 0 ? 2 : 1;
  if (weights.layers.size() != expected_layers)
    throw ConfigError("downsample " + std::to_string(stage_index) + " expects " + std::to_string(expected_layers) + " conv layers");
  Tensor<Scalar> y = x;
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const auto& layer = weights.layers[i];
    y = conv2d_direct(y, layer.conv, layer.params);
    if (layer.bn) y = batch_norm(y, *layer.bn);
    if (i + 1 < weights.layers.size()) y = gelu(y, mode);
  }
  return y;
}

template <typename Scalar>
DownsampleParams<Scalar> merge_downsample(const DownsampleParams<Scalar>& d) {
  DownsampleParams<Scalar> out = d;
  for (auto& layer : out.layers)
    if (layer.bn) {
      layer.conv = fuse_bn(layer.conv, *layer.bn);
      layer.bn.reset();
    }
  return out;
}

}  // namespace ulk
