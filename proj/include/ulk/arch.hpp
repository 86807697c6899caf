#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "ulk/blocks.hpp"

namespace ulk {

/// Depths, width and kernel schedule of one network instance.
///
/// Stage 1 holds SmaK blocks only, stages 2 and 4 LarK blocks only, and
/// stage 3 `stage3_lark` LarK blocks interleaved with SmaK blocks.
struct ArchSpec {
  std::string name;
  std::array<Index, 4> depths{};
  Index width = 0;
  Index stage3_lark = 0;
  DilatedReparamConfig reparam = DilatedReparamConfig::k13();
  Index ffn_ratio = 4;
  Index num_classes = 0;  // 0: no classifier head

  Index stage_width(std::size_t stage) const { return width << stage; }

  BlockKind kind_at(std::size_t stage, Index index) const {
    switch (stage) {
      case 0:
        return BlockKind::kSmaK;
      case 2:
        // LarK first, then the SmaK blocks that follow it: (i * L) mod N3 < L.
        return (index * stage3_lark) % depths[2] < stage3_lark ? BlockKind::kLarK : BlockKind::kSmaK;
      default:
        return BlockKind::kLarK;
    }
  }

  void validate() const {
    for (Index n : depths)
      if (n < 1) throw ConfigError("every stage needs at least one block");
    if (stage3_lark < 0 || stage3_lark > depths[2]) throw ConfigError("stage-3 LarK count exceeds N3");
    if (width < 4 || width % 4 != 0) throw ConfigError("width must be a positive multiple of 4, got " + std::to_string(width));
    if (ffn_ratio < 1) throw ConfigError("FFN ratio must be >= 1");
    if (num_classes < 0) throw ConfigError("class count must be >= 0");
    reparam.validate();
  }

  bool operator==(const ArchSpec&) const = default;
};

struct VariantRow {
  std::string_view name;
  std::array<Index, 4> depths;
  Index stage3_lark;
  Index width;
  double reference_params_m;
};

/// Published family table: N1..N4 (stage 3 as LarK + SmaK), C, parameter count in millions.
inline constexpr std::array<VariantRow, 10> kVariantTable{{
    {"A", {2, 2, 6, 2}, 6, 40, 4.4},
    {"F", {2, 2, 6, 2}, 6, 48, 6.2},
    {"P", {2, 2, 6, 2}, 6, 64, 10.7},
    {"N", {2, 2, 8, 2}, 8, 80, 18.3},
    {"T", {3, 3, 18, 3}, 9, 80, 31.0},
    {"S", {3, 3, 27, 3}, 9, 96, 55.6},
    {"B", {3, 3, 27, 3}, 9, 128, 97.9},
    {"L", {3, 3, 27, 3}, 9, 192, 218.3},
    {"XL", {3, 3, 27, 3}, 9, 256, 386.4},
    {"H", {3, 3, 27, 3}, 9, 480, 1400.0},
}};

inline const VariantRow& variant_row(std::string_view name) {
  for (const auto& row : kVariantTable)
    if (row.name == name) return row;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected one of A F P N T S B L XL H)");
}

inline ArchSpec arch_spec(std::string_view name, Index num_classes = 0) {
  const VariantRow& row = variant_row(name);
  ArchSpec spec;
  spec.name = std::string(row.name);
  spec.depths = row.depths;
  spec.width = row.width;
  spec.stage3_lark = row.stage3_lark;
  spec.num_classes = num_classes;
  return spec;
}

/// Classifier: global average pool -> BN -> linear.
template <typename Scalar>
struct HeadParams {
  std::optional<BatchNormParams<Scalar>> norm;
  Tensor<Scalar> fc_weight;  // [classes, 8C]
  Tensor<Scalar> fc_bias;    // [classes]

  bool operator==(const HeadParams&) const = default;
};

template <typename Scalar>
struct Model {
  ArchSpec spec;
  std::array<DownsampleParams<Scalar>, 4> downsample;  // [0] is the stem
  std::array<std::vector<BlockSpec<Scalar>>, 4> stages;
  std::optional<HeadParams<Scalar>> head;

  bool merged() const {
    for (const auto& stage : stages)
      for (const auto& b : stage)
        if (!b.merged()) return false;
    for (const auto& d : downsample)
      for (const auto& l : d.layers)
        if (l.bn) return false;
    return !head || !head->norm;
  }

  bool operator==(const Model&) const = default;
};

/// Randomly initialized model; identical seeds give bit-identical weights.
template <typename Scalar>
Model<Scalar> build_model(const ArchSpec& spec, std::uint64_t seed, const InitOptions& opts = {}) {
  spec.validate();
  Rng rng(seed);
  Model<Scalar> m;
  m.spec = spec;
  m.downsample[0] = DownsampleParams<Scalar>::random_stem(spec.width, rng, opts);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0)
      m.downsample[s] = DownsampleParams<Scalar>::random_transition(spec.stage_width(s - 1), spec.stage_width(s), rng, opts);
    for (Index i = 0; i < spec.depths[s]; ++i)
      m.stages[s].push_back(random_block<Scalar>(spec.kind_at(s, i), spec.stage_width(s), spec.reparam, spec.ffn_ratio, rng, opts));
  }
  if (spec.num_classes > 0) {
    const Index c = spec.stage_width(3);
    m.head = HeadParams<Scalar>{
        opts.random_norms ? BatchNormParams<Scalar>::random(c, rng) : BatchNormParams<Scalar>::identity(c),
        trunc_normal<Scalar>(Shape{spec.num_classes, c}, rng, opts.weight_std), Tensor<Scalar>(Shape{spec.num_classes})};
  }
  return m;
}

template <typename Scalar>
Model<Scalar> build_variant(std::string_view name, std::uint64_t seed, const InitOptions& opts = {}) {
  return build_model<Scalar>(arch_spec(name), seed, opts);
}

/// Learned-scalar counts: conv/linear weights and biases, BN and GRN
/// gamma/beta. BN running statistics are buffers and are not counted.
struct ParamReport {
  std::array<Index, 4> downsample{};  // [0] is the stem
  std::array<Index, 4> stages{};
  Index head = 0;

  Index total_without_head() const {
    Index n = 0;
    for (std::size_t i = 0; i < 4; ++i) n += downsample[i] + stages[i];
    return n;
  }
  Index total_with_head() const { return total_without_head() + head; }
};

/// Closed-form count for an unmerged block.
inline Index block_param_count(BlockKind kind, Index c, const DilatedReparamConfig& cfg, Index ffn_ratio) {
  Index conv = 0;
  if (kind == BlockKind::kLarK) {
    conv = cfg.kernel_size * cfg.kernel_size * c + 2 * c;
    for (const auto& b : cfg.branches) conv += b.kernel_size * b.kernel_size * c + 2 * c;
  } else {
    conv = 9 * c;
  }
  const Index r = c / SeParams<double>::kReduction;
  const Index h = c * ffn_ratio;
  const Index se = r * c + r + c * r + c;
  const Index ffn = (h * c + h) + 2 * h + h * c;
  return conv + 2 * c + se + ffn + 2 * c;
}

/// Parameter count from the architecture alone (no weights materialized).
inline ParamReport count_params(const ArchSpec& spec, Index head_classes = 1000) {
  spec.validate();
  ParamReport report;
  const Index c = spec.width;
  report.downsample[0] = 3 * (c / 2) * 9 + 2 * (c / 2) + (c / 2) * c * 9 + 2 * c;
  for (std::size_t s = 0; s < 4; ++s) {
    const Index w = spec.stage_width(s);
    if (s > 0) report.downsample[s] = (w / 2) * w * 9 + 2 * w;
    for (Index i = 0; i < spec.depths[s]; ++i)
      report.stages[s] += block_param_count(spec.kind_at(s, i), w, spec.reparam, spec.ffn_ratio);
  }
  const Index classes = spec.num_classes > 0 ? spec.num_classes : head_classes;
  report.head = 2 * spec.stage_width(3) + classes * spec.stage_width(3) + classes;
  return report;
}

/// Parameter count of materialized weights (merged or not).
template <typename Scalar>
ParamReport count_params(const Model<Scalar>& m) {
  ParamReport report;
  for (std::size_t s = 0; s < 4; ++s) {
    report.downsample[s] = m.downsample[s].param_count();
    for (const auto& b : m.stages[s]) report.stages[s] += b.param_count();
  }
  if (m.head)
    report.head = m.head->fc_weight.size() + m.head->fc_bias.size() + (m.head->norm ? 2 * m.head->norm->channels() : 0);
  return report;
}

/// Features after stage 4: [B, 8C, H/32, W/32].
template <typename Scalar>
Tensor<Scalar> model_features(const Model<Scalar>& m, const Tensor<Scalar>& x, GeluMode mode = GeluMode::kTanh) {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("model input must be [B, 3, H, W], got " + x.shape().to_string());
  if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0)
    throw ShapeError("model input resolution must be divisible by 32, got " + x.shape().to_string());
  Tensor<Scalar> y = x;
  for (std::size_t s = 0; s < 4; ++s) {
    y = downsample_forward(y, static_cast<Index>(s), m.downsample[s], mode);
    for (const auto& block : m.stages[s]) y = block_forward(y, block, mode);
  }
  return y;
}

/// Classifier logits [B, classes]; requires a head.
template <typename Scalar>
Tensor<Scalar> head_forward(const HeadParams<Scalar>& head, const Tensor<Scalar>& features) {
  Tensor<Scalar> pooled = reduce_spatial_mean(features);
  if (head.norm) pooled = batch_norm(pooled, *head.norm);
  const auto w = as_matrix(head.fc_weight);
  if (w.cols() != pooled.dim(1)) throw ShapeError("head input width mismatch");
  Tensor<Scalar> logits(Shape{pooled.dim(0), w.rows()});
  Eigen::Map<RowMajorMatrix<Scalar>>(logits.ptr(), pooled.dim(0), w.rows()) =
      (as_matrix(pooled) * w.transpose()).rowwise() + as_vector(head.fc_bias).transpose();
  return logits;
}

/// Stage-4 features, or logits when the model carries a head.
template <typename Scalar>
Tensor<Scalar> model_forward(const Model<Scalar>& m, const Tensor<Scalar>& x, GeluMode mode = GeluMode::kTanh) {
  Tensor<Scalar> features = model_features(m, x, mode);
  if (!m.head) return features;
  return head_forward(*m.head, features);
}

/// Deployment form: every block merged, every BN folded into its conv or linear.
template <typename Scalar>
Model<Scalar> merge_model(const Model<Scalar>& m) {
  Model<Scalar> out = m;
  for (std::size_t s = 0; s < 4; ++s) {
    out.downsample[s] = merge_downsample(m.downsample[s]);
    for (auto& b : out.stages[s]) b = merge_block_for_inference(b);
  }
  if (out.head && out.head->norm) {
    // fc(BN(v)) = W diag(s) v + (b + W (beta - mean * s))
    const BatchNormParams<Scalar>& bn = *out.head->norm;
    const Tensor<Scalar> scale = bn.scale();
    auto w = as_matrix(m.head->fc_weight);
    Tensor<Scalar> shift(bn.beta.shape());
    shift.array() = bn.beta.array() - bn.running_mean.array() * scale.array();
    Tensor<Scalar> bias = m.head->fc_bias;
    Eigen::Map<Vector<Scalar>>(bias.ptr(), bias.size()) += w * as_vector(shift);
    Tensor<Scalar> weight(m.head->fc_weight.shape());
    Eigen::Map<RowMajorMatrix<Scalar>>(weight.ptr(), w.rows(), w.cols()) = w * as_vector(scale).asDiagonal();
    out.head->fc_weight = std::move(weight);
    out.head->fc_bias = std::move(bias);
    out.head->norm.reset();
  }
  return out;
}

/// Largest spatial kernel per stage, LarK kernels reported at their K.
template <typename Scalar>
std::array<Index, 4> max_kernel_per_stage(const Model<Scalar>& m) {
  std::array<Index, 4> out{};
  for (std::size_t s = 0; s < 4; ++s)
    for (const auto& b : m.stages[s]) out[s] = std::max(out[s], b.kernel_size());
  return out;
}

}  // namespace ulk
