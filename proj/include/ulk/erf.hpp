#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numeric>
#include <string>
#include <vector>

#include "ulk/dwconv_blocked.hpp"
#include "ulk/init.hpp"
#include "ulk/parallel.hpp"

namespace ulk {

enum class Nonlinearity { kNone, kRelu };

/// A stack of `depth` same-padded depth-wise k x k convolutions on R x R inputs.
struct ErfStackSpec {
  Index depth = 1;
  Index kernel_size = 3;
  Index channels = 4;
  Nonlinearity nonlinearity = Nonlinearity::kNone;
  Index resolution = 64;

  void validate() const {
    if (depth < 1) throw ConfigError("ERF stack depth must be >= 1");
    if (channels < 1) throw ConfigError("ERF stack needs at least one channel");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("ERF kernel size must be odd, got " + std::to_string(kernel_size));
    if ((kernel_size - 1) * depth >= resolution)
      throw ConfigError("theoretical receptive field " + std::to_string((kernel_size - 1) * depth + 1) +
                        " must stay inside the " + std::to_string(resolution) + "-pixel input: need (k-1)*n < R");
  }
};

/// Accumulated |d y_centre / d x| over samples and channels, normalized to max 1.
struct ErfMap {
  Tensor<double> grid;  // [R, R]
  Index samples = 0;
};

/// Random stack weights: standard normal scaled by 1/k, one [C, 1, k, k] kernel per layer.
inline std::vector<ConvKernel<double>> erf_stack_weights(const ErfStackSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<ConvKernel<double>> layers;
  const double scale = 1.0 / static_cast<double>(spec.kernel_size);
  for (Index l = 0; l < spec.depth; ++l)
    layers.push_back({random_normal<double>(Shape{spec.channels, 1, spec.kernel_size, spec.kernel_size}, rng, scale), std::nullopt});
  return layers;
}

/// Input gradient of the channel-summed centre output for one input sample.
/// ReLU (when enabled) follows every layer except the last.
inline Tensor<double> erf_sample_gradient(const ErfStackSpec& spec, const std::vector<ConvKernel<double>>& layers,
                                          const Tensor<double>& input) {
  const ConvParams p{1, same_padding(spec.kernel_size), 1, spec.channels};
  const bool relu = spec.nonlinearity == Nonlinearity::kRelu;
  std::vector<Tensor<double>> pre;
  Tensor<double> a = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Tensor<double> z = dwconv2d_blocked(a, layers[l], p);
    a = z;
    if (relu && l + 1 < layers.size()) a.array() = a.array().max(0.0);
    pre.push_back(std::move(z));
  }

  const Index r = spec.resolution;
  Tensor<double> grad(input.shape());
  for (Index c = 0; c < spec.channels; ++c) grad(0, c, r / 2, r / 2) = 1.0;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (relu && l + 1 < layers.size())
      grad.array() = (pre[l].array() > 0.0).select(grad.array(), 0.0);
    grad = conv2d_input_grad(grad, layers[l], p, input.shape());
  }
  return grad;
}

namespace detail {

/// Fixed-shape pairwise reduction; the tree depends only on the count.
inline Tensor<double> pairwise_sum(std::vector<Tensor<double>>& terms, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return terms[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  Tensor<double> left = pairwise_sum(terms, lo, mid);
  left.array() += pairwise_sum(terms, mid, hi).array();
  return left;
}

}  // namespace detail

/// Effective receptive field of a random-weight depth-wise stack.
///
/// Weights are drawn once from `seed`; each sample draws a fresh standard
/// normal input from a per-sample stream, so the map is identical for any
/// worker count.
inline ErfMap erf_map(const ErfStackSpec& spec, Index num_samples, std::uint64_t seed) {
  spec.validate();
  if (num_samples < 1) throw ConfigError("ERF needs at least one sample");
  const auto layers = erf_stack_weights(spec, seed);
  const Index r = spec.resolution;

  std::vector<Tensor<double>> per_sample(static_cast<std::size_t>(num_samples));
  parallel_for(num_samples, [&](Index s) {
    Rng rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(s + 1)));
    const Tensor<double> input = random_normal<double>(Shape{1, spec.channels, r, r}, rng);
    const Tensor<double> grad = erf_sample_gradient(spec, layers, input);
    Tensor<double> map(Shape{r, r});
    for (Index c = 0; c < spec.channels; ++c)
      for (Index i = 0; i < r * r; ++i) map.ptr()[i] += std::abs(grad.ptr()[c * r * r + i]);
    per_sample[static_cast<std::size_t>(s)] = std::move(map);
  });

  ErfMap out{detail::pairwise_sum(per_sample, 0, per_sample.size()), num_samples};
  const double peak = out.grid.array().maxCoeff();
  if (peak > 0.0) out.grid.array() /= peak;
  return out;
}

/// Fraction of cells in the smallest set holding fraction t of the total mass.
inline double high_contribution_area(const ErfMap& m, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("area threshold must lie in (0, 1), got " + std::to_string(t));
  std::vector<double> values(m.grid.data().begin(), m.grid.data().end());
  if (values.empty()) throw ShapeError("empty ERF map");
  std::sort(values.begin(), values.end(), std::greater<>());
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("ERF map has no mass");
  const double target = t * total;
  double running = 0.0;
  std::size_t cells = 0;
  while (cells < values.size() && running < target) running += values[cells++];
  return static_cast<double>(cells) / static_cast<double>(values.size());
}

/// Comma-separated grid, one row per line.
void write_erf_csv(std::ostream& os, const ErfMap& m);

/// Binary 8-bit PGM; pixel = round(255 * v^gamma).
void write_erf_pgm(std::ostream& os, const ErfMap& m, double gamma = 0.5);

}  // namespace ulk
