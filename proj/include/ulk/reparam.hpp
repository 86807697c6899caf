#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ulk/conv.hpp"
#include "ulk/init.hpp"

namespace ulk {

/// Inference-mode batch normalization: y = (x - mean) / sqrt(var + eps) * gamma + beta.
template <typename Scalar>
struct BatchNormParams {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar eps = Scalar(1e-5);

  Index channels() const { return gamma.size(); }

  void validate() const {
    const Shape c{channels()};
    if (gamma.shape() != c || beta.shape() != c || running_mean.shape() != c || running_var.shape() != c)
      throw ShapeError("batch norm vectors must all have shape " + c.to_string());
    if (!(eps > Scalar(0))) throw ConfigError("batch norm eps must be positive");
    for (Scalar v : running_var.data())
      if (v < Scalar(0)) throw ConfigError("batch norm running variance must be non-negative");
  }

  /// Per-channel multiplier gamma / sqrt(var + eps).
  Tensor<Scalar> scale() const {
    Tensor<Scalar> s(gamma.shape());
    s.array() = gamma.array() / (running_var.array() + eps).sqrt();
    return s;
  }

  static BatchNormParams identity(Index c) {
    return {Tensor<Scalar>::constant(Shape{c}, Scalar(1)), Tensor<Scalar>(Shape{c}), Tensor<Scalar>(Shape{c}),
            Tensor<Scalar>::constant(Shape{c}, Scalar(1))};
  }

  /// Random statistics with variance in [1e-3, 10], used to stress merges.
  static BatchNormParams random(Index c, Rng& rng) {
    BatchNormParams bn;
    bn.gamma = random_uniform<Scalar>(Shape{c}, rng, 0.5, 1.5);
    bn.beta = random_normal<Scalar>(Shape{c}, rng, 0.5);
    bn.running_mean = random_normal<Scalar>(Shape{c}, rng, 0.5);
    bn.running_var = random_uniform<Scalar>(Shape{c}, rng, 1e-3, 10.0);
    return bn;
  }

  bool operator==(const BatchNormParams&) const = default;
};

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const BatchNormParams<Scalar>& bn) {
  if (x.rank() < 2 || x.dim(1) != bn.channels())
    throw ShapeError("batch norm over " + std::to_string(bn.channels()) + " channels cannot take " + x.shape().to_string());
  const Index c = x.dim(1);
  Index inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  const Tensor<Scalar> s = bn.scale();
  Tensor<Scalar> y(x.shape());
  for (Index b = 0; b < x.dim(0); ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * inner;
      const Scalar mul = s(ch);
      const Scalar mean = bn.running_mean(ch);
      const Scalar shift = bn.beta(ch);
      for (Index i = 0; i < inner; ++i) y.ptr()[off + i] = (x.ptr()[off + i] - mean) * mul + shift;
    }
  return y;
}

/// Folds an inference-mode BN into the preceding convolution.
template <typename Scalar>
ConvKernel<Scalar> fuse_bn(const ConvKernel<Scalar>& kernel, const BatchNormParams<Scalar>& bn) {
  bn.validate();
  const Index c_out = kernel.weight.dim(0);
  if (bn.channels() != c_out)
    throw ShapeError("batch norm has " + std::to_string(bn.channels()) + " channels, conv has " + std::to_string(c_out) +
                     " outputs");
  const Tensor<Scalar> s = bn.scale();
  const Index per_out = kernel.weight.size() / c_out;

  ConvKernel<Scalar> fused{kernel.weight, Tensor<Scalar>(Shape{c_out})};
  for (Index o = 0; o < c_out; ++o) {
    Scalar* w = fused.weight.ptr() + o * per_out;
    for (Index i = 0; i < per_out; ++i) w[i] *= s(o);
    const Scalar prior = kernel.bias ? (*kernel.bias)(o) : Scalar(0);
    (*fused.bias)(o) = bn.beta(o) + (prior - bn.running_mean(o)) * s(o);
  }
  return fused;
}

/// Rewrites a kernel meant for dilation r as the equivalent non-dilated sparse
/// kernel of size (k-1)r+1, via a stride-r transpose convolution with a 1x1
/// identity kernel. Dense and grouped kernels are converted one input-channel
/// slice at a time and concatenated back.
template <typename Scalar>
ConvKernel<Scalar> dilate_kernel(const ConvKernel<Scalar>& kernel, Index dilation) {
  if (dilation < 1) throw ConfigError("dilation must be >= 1, got " + std::to_string(dilation));
  if (kernel.weight.rank() != 4) throw ShapeError("dilate_kernel expects a 4-D weight");
  if (dilation == 1) return kernel;

  const ConvKernel<Scalar> identity{Tensor<Scalar>::constant(Shape{1, 1, 1, 1}, Scalar(1)), std::nullopt};
  const Tensor<Scalar>& w = kernel.weight;
  if (w.dim(1) == 1) return {conv_transpose2d(w, identity, dilation), kernel.bias};

  const Index c_out = w.dim(0), slices = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const Index eh = equivalent_kernel_size(kh, dilation), ew = equivalent_kernel_size(kw, dilation);
  Tensor<Scalar> merged(Shape{c_out, slices, eh, ew});
  for (Index i = 0; i < slices; ++i) {
    Tensor<Scalar> slice(Shape{c_out, 1, kh, kw});
    for (Index o = 0; o < c_out; ++o)
      for (Index y = 0; y < kh; ++y)
        for (Index x = 0; x < kw; ++x) slice(o, 0, y, x) = w(o, i, y, x);
    const Tensor<Scalar> sparse = conv_transpose2d(slice, identity, dilation);
    for (Index o = 0; o < c_out; ++o)
      for (Index y = 0; y < eh; ++y)
        for (Index x = 0; x < ew; ++x) merged(o, i, y, x) = sparse(o, 0, y, x);
  }
  return {std::move(merged), kernel.bias};
}

namespace detail {

template <typename Scalar>
void accumulate_centered(ConvKernel<Scalar>& into, const ConvKernel<Scalar>& addend) {
  const Tensor<Scalar> padded = pad2d_center(addend.weight, into.weight.dim(2));
  if (padded.shape() != into.weight.shape())
    throw ShapeError("cannot add kernel " + addend.weight.shape().to_string() + " into " + into.weight.shape().to_string());
  into.weight.array() += padded.array();
  if (addend.bias) {
    if (!into.bias) into.bias = Tensor<Scalar>(addend.bias->shape());
    into.bias->array() += addend.bias->array();
  }
}

}  // namespace detail

/// Merges a parallel (small conv + BN) branch into a (large conv + BN) branch.
template <typename Scalar>
ConvKernel<Scalar> merge_small_into_large(const ConvKernel<Scalar>& large, const BatchNormParams<Scalar>& large_bn,
                                          const ConvKernel<Scalar>& small, const BatchNormParams<Scalar>& small_bn) {
  const Index big = large.weight.dim(2), little = small.weight.dim(2);
  if (large.weight.dim(3) != big || small.weight.dim(3) != little) throw ConfigError("kernels must be square");
  if (big % 2 == 0 || little % 2 == 0)
    throw ConfigError("kernel sizes must be odd, got " + std::to_string(little) + " and " + std::to_string(big));
  if (little > big) throw ConfigError("small kernel " + std::to_string(little) + " exceeds large kernel " + std::to_string(big));
  if (large.weight.dim(0) != small.weight.dim(0) || large.weight.dim(1) != small.weight.dim(1))
    throw ShapeError("branch channel layouts differ: " + large.weight.shape().to_string() + " vs " +
                     small.weight.shape().to_string());
  ConvKernel<Scalar> merged = fuse_bn(large, large_bn);
  detail::accumulate_centered(merged, fuse_bn(small, small_bn));
  return merged;
}

struct DilatedBranch {
  Index kernel_size;
  Index dilation;

  bool operator==(const DilatedBranch&) const = default;
};

/// Large kernel size K plus the (k, r) list of parallel dilated branches.
struct DilatedReparamConfig {
  Index kernel_size = 13;
  std::vector<DilatedBranch> branches;

  void validate() const {
    if (kernel_size < 3 || kernel_size % 2 == 0)
      throw ConfigError("large kernel size must be odd and >= 3, got " + std::to_string(kernel_size));
    for (const auto& b : branches) {
      if (b.kernel_size < 1 || b.kernel_size % 2 == 0)
        throw ConfigError("branch kernel size must be odd, got " + std::to_string(b.kernel_size));
      if (b.dilation < 1) throw ConfigError("branch dilation must be >= 1, got " + std::to_string(b.dilation));
      const Index eq = equivalent_kernel_size(b.kernel_size, b.dilation);
      if (eq > kernel_size)
        throw ConfigError("branch k=" + std::to_string(b.kernel_size) + " r=" + std::to_string(b.dilation) +
                          " has equivalent size " + std::to_string(eq) + " > K=" + std::to_string(kernel_size));
    }
  }

  /// K=9: k=(5,5,3,3), r=(1,2,3,4).
  static DilatedReparamConfig k9() { return {9, {{5, 1}, {5, 2}, {3, 3}, {3, 4}}}; }
  /// K=13: k=(5,7,3,3,3), r=(1,2,3,4,5).
  static DilatedReparamConfig k13() { return {13, {{5, 1}, {7, 2}, {3, 3}, {3, 4}, {3, 5}}}; }

  /// Non-dilated branches with the same kernel sizes.
  DilatedReparamConfig same_kernel_variant() const {
    DilatedReparamConfig v{kernel_size, branches};
    for (auto& b : v.branches) b.dilation = 1;
    return v;
  }

  /// Non-dilated branches with the same equivalent kernel sizes.
  DilatedReparamConfig same_equivalent_variant() const {
    DilatedReparamConfig v{kernel_size, branches};
    for (auto& b : v.branches) b = {equivalent_kernel_size(b.kernel_size, b.dilation), 1};
    return v;
  }

  bool operator==(const DilatedReparamConfig&) const = default;
};

/// Depth-wise K x K conv + BN with parallel dilated depth-wise conv + BN branches.
template <typename Scalar>
struct DilatedReparamBlock {
  DilatedReparamConfig config;
  ConvKernel<Scalar> main;
  BatchNormParams<Scalar> main_bn;
  std::vector<ConvKernel<Scalar>> branches;
  std::vector<BatchNormParams<Scalar>> branch_bns;

  Index channels() const { return main.weight.dim(0); }

  void validate() const {
    config.validate();
    const Index c = channels();
    if (main.weight.shape() != Shape{c, 1, config.kernel_size, config.kernel_size})
      throw ShapeError("main kernel " + main.weight.shape().to_string() + " is not depth-wise K x K");
    if (main_bn.channels() != c) throw ShapeError("main BN channel count mismatch");
    if (branches.size() != config.branches.size() || branch_bns.size() != config.branches.size())
      throw ConfigError("branch count does not match config");
    for (std::size_t i = 0; i < branches.size(); ++i) {
      const Index k = config.branches[i].kernel_size;
      if (branches[i].weight.shape() != Shape{c, 1, k, k})
        throw ShapeError("branch " + std::to_string(i) + " kernel " + branches[i].weight.shape().to_string() +
                         " is not depth-wise " + std::to_string(k) + "x" + std::to_string(k));
      if (branch_bns[i].channels() != c) throw ShapeError("branch BN channel count mismatch");
    }
  }

  /// Random weights (trunc normal, sigma = weight_std) and either identity or random BN statistics.
  static DilatedReparamBlock random(const DilatedReparamConfig& cfg, Index channels, Rng& rng, double weight_std,
                                    bool random_bn) {
    cfg.validate();
    auto make_bn = [&] {
      return random_bn ? BatchNormParams<Scalar>::random(channels, rng) : BatchNormParams<Scalar>::identity(channels);
    };
    DilatedReparamBlock block{cfg, {trunc_normal<Scalar>(Shape{channels, 1, cfg.kernel_size, cfg.kernel_size}, rng, weight_std), std::nullopt},
                              make_bn(), {}, {}};
    for (const auto& b : cfg.branches) {
      block.branches.push_back({trunc_normal<Scalar>(Shape{channels, 1, b.kernel_size, b.kernel_size}, rng, weight_std), std::nullopt});
      block.branch_bns.push_back(make_bn());
    }
    return block;
  }

  bool operator==(const DilatedReparamBlock&) const = default;
};

/// Multi-branch forward: sum of every same-padded branch after its BN.
template <typename Scalar>
Tensor<Scalar> dilated_reparam_forward(const Tensor<Scalar>& x, const DilatedReparamBlock<Scalar>& block) {
  block.validate();
  const Index c = block.channels();
  const Index K = block.config.kernel_size;
  Tensor<Scalar> y = batch_norm(conv2d_direct(x, block.main, {1, same_padding(K), 1, c}), block.main_bn);
  for (std::size_t i = 0; i < block.branches.size(); ++i) {
    const auto& b = block.config.branches[i];
    const ConvParams p{1, same_padding(b.kernel_size, b.dilation), b.dilation, c};
    y.array() += batch_norm(conv2d_direct(x, block.branches[i], p), block.branch_bns[i]).array();
  }
  return y;
}

/// Collapses the block into one K x K depth-wise kernel with bias: fuse every
/// BN, convert dilated branches to sparse kernels, center-pad and sum.
template <typename Scalar>
ConvKernel<Scalar> merge_dilated_reparam_block(const DilatedReparamBlock<Scalar>& block) {
  block.validate();
  ConvKernel<Scalar> merged = fuse_bn(block.main, block.main_bn);
  for (std::size_t i = 0; i < block.branches.size(); ++i) {
    const ConvKernel<Scalar> fused = fuse_bn(block.branches[i], block.branch_bns[i]);
    detail::accumulate_centered(merged, dilate_kernel(fused, block.config.branches[i].dilation));
  }
  return merged;
}

}  // namespace ulk
