#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ulk/arch.hpp"
#include "ulk/weights_io.hpp"

namespace ulk {

// Tensor naming inside a model file:
//   arch.config                 [N1 N2 N3 N4 C stage3_lark K ffn_ratio classes]
//   arch.branches               [branches, 2] of (k, r); absent when there are none
//   down.{s}.{i}.weight|bias    stem (s = 0, two layers) and transitions
//   down.{s}.{i}.bn.{gamma,beta,mean,var}
//   stages.{s}.{j}.conv.main.weight + conv.main.bn.*      unmerged LarK
//   stages.{s}.{j}.conv.branch.{i}.weight + .bn.*
//   stages.{s}.{j}.conv.weight [+ conv.bias]               SmaK or merged
//   stages.{s}.{j}.norm.*, .se.fc{1,2}.{weight,bias}, .ffn.{expand,reduce}.{weight,bias},
//   .ffn.grn.{gamma,beta}, .ffn.norm.*
//   head.norm.*, head.fc.{weight,bias}

namespace detail {

template <typename Scalar>
class NamedWriter {
 public:
  explicit NamedWriter(Dtype dtype) : dtype_(dtype) {}

  void tensor(const std::string& name, const Tensor<Scalar>& t) { out_.push_back(to_named(name, t, dtype_)); }

  void kernel(const std::string& prefix, const ConvKernel<Scalar>& k) {
    tensor(prefix + ".weight", k.weight);
    if (k.bias) tensor(prefix + ".bias", *k.bias);
  }

  void bn(const std::string& prefix, const BatchNormParams<Scalar>& bn) {
    tensor(prefix + ".gamma", bn.gamma);
    tensor(prefix + ".beta", bn.beta);
    tensor(prefix + ".mean", bn.running_mean);
    tensor(prefix + ".var", bn.running_var);
  }

  void metadata(const std::string& name, Shape shape, std::vector<double> values) {
    out_.push_back({name, std::move(shape), std::move(values), Dtype::kF32});
  }

  std::vector<NamedTensor> take() { return std::move(out_); }

 private:
  Dtype dtype_;
  std::vector<NamedTensor> out_;
};

template <typename Scalar>
class NamedReader {
 public:
  explicit NamedReader(const std::vector<NamedTensor>& tensors) {
    for (const auto& t : tensors) by_name_.emplace(t.name, &t);
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  const NamedTensor& raw(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw FormatError(FormatError::Kind::kMalformed, "missing tensor '" + name + "'");
    used_.insert(name);
    return *it->second;
  }

  Tensor<Scalar> tensor(const std::string& name, const Shape& expected) {
    const NamedTensor& t = raw(name);
    if (t.shape != expected)
      throw FormatError(FormatError::Kind::kShapeMismatch,
                        "tensor '" + name + "' has shape " + t.shape.to_string() + ", expected " + expected.to_string());
    return from_named<Scalar>(t);
  }

  ConvKernel<Scalar> kernel(const std::string& prefix, const Shape& weight_shape) {
    ConvKernel<Scalar> k{tensor(prefix + ".weight", weight_shape), std::nullopt};
    if (has(prefix + ".bias")) k.bias = tensor(prefix + ".bias", Shape{weight_shape[0]});
    return k;
  }

  BatchNormParams<Scalar> bn(const std::string& prefix, Index c) {
    BatchNormParams<Scalar> p{tensor(prefix + ".gamma", Shape{c}), tensor(prefix + ".beta", Shape{c}),
                              tensor(prefix + ".mean", Shape{c}), tensor(prefix + ".var", Shape{c})};
    for (Scalar v : p.running_var.data())
      if (v < Scalar(0)) throw FormatError(FormatError::Kind::kMalformed, "negative running variance in '" + prefix + "'");
    return p;
  }

  std::optional<BatchNormParams<Scalar>> optional_bn(const std::string& prefix, Index c) {
    if (!has(prefix + ".gamma")) return std::nullopt;
    return bn(prefix, c);
  }

  void finish() const {
    for (const auto& [name, _] : by_name_)
      if (!used_.count(name)) throw FormatError(FormatError::Kind::kMalformed, "unexpected tensor '" + name + "'");
  }

 private:
  std::map<std::string, const NamedTensor*> by_name_;
  std::set<std::string> used_;
};

inline Index metadata_int(double v, const char* what) {
  if (v < 0 || v != static_cast<double>(static_cast<Index>(v)) || v > 1e6)
    throw FormatError(FormatError::Kind::kMalformed, std::string("invalid architecture field ") + what);
  return static_cast<Index>(v);
}

}  // namespace detail

template <typename Scalar>
std::vector<NamedTensor> model_to_named(const Model<Scalar>& m, Dtype dtype = Dtype::kF32) {
  detail::NamedWriter<Scalar> w(dtype);
  const ArchSpec& a = m.spec;
  w.metadata("arch.config", Shape{9},
             {double(a.depths[0]), double(a.depths[1]), double(a.depths[2]), double(a.depths[3]), double(a.width),
              double(a.stage3_lark), double(a.reparam.kernel_size), double(a.ffn_ratio), double(a.num_classes)});
  if (!a.reparam.branches.empty()) {
    std::vector<double> pairs;
    for (const auto& b : a.reparam.branches) {
      pairs.push_back(double(b.kernel_size));
      pairs.push_back(double(b.dilation));
    }
    w.metadata("arch.branches", Shape{Index(a.reparam.branches.size()), 2}, std::move(pairs));
  }
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& layers = m.downsample[s].layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "down." + std::to_string(s) + "." + std::to_string(i);
      w.kernel(p, layers[i].conv);
      if (layers[i].bn) w.bn(p + ".bn", *layers[i].bn);
    }
    for (std::size_t j = 0; j < m.stages[s].size(); ++j) {
      const BlockSpec<Scalar>& b = m.stages[s][j];
      const std::string p = "stages." + std::to_string(s) + "." + std::to_string(j);
      if (b.reparam) {
        w.kernel(p + ".conv.main", b.reparam->main);
        w.bn(p + ".conv.main.bn", b.reparam->main_bn);
        for (std::size_t i = 0; i < b.reparam->branches.size(); ++i) {
          w.kernel(p + ".conv.branch." + std::to_string(i), b.reparam->branches[i]);
          w.bn(p + ".conv.branch." + std::to_string(i) + ".bn", b.reparam->branch_bns[i]);
        }
      } else {
        w.kernel(p + ".conv", *b.dw);
      }
      if (b.conv_bn) w.bn(p + ".norm", *b.conv_bn);
      w.tensor(p + ".se.fc1.weight", b.se.fc1_weight);
      w.tensor(p + ".se.fc1.bias", b.se.fc1_bias);
      w.tensor(p + ".se.fc2.weight", b.se.fc2_weight);
      w.tensor(p + ".se.fc2.bias", b.se.fc2_bias);
      w.kernel(p + ".ffn.expand", b.ffn.expand);
      w.tensor(p + ".ffn.grn.gamma", b.ffn.grn.gamma);
      w.tensor(p + ".ffn.grn.beta", b.ffn.grn.beta);
      w.kernel(p + ".ffn.reduce", b.ffn.reduce);
      if (b.ffn_bn) w.bn(p + ".ffn.norm", *b.ffn_bn);
    }
  }
  if (m.head) {
    if (m.head->norm) w.bn("head.norm", *m.head->norm);
    w.tensor("head.fc.weight", m.head->fc_weight);
    w.tensor("head.fc.bias", m.head->fc_bias);
  }
  return w.take();
}

template <typename Scalar>
Model<Scalar> model_from_named(const std::vector<NamedTensor>& tensors) {
  detail::NamedReader<Scalar> r(tensors);
  const NamedTensor& cfg = r.raw("arch.config");
  if (cfg.shape != Shape{9}) throw FormatError(FormatError::Kind::kShapeMismatch, "arch.config must have 9 entries");
  Model<Scalar> m;
  ArchSpec& a = m.spec;
  a.name = "custom";
  for (std::size_t i = 0; i < 4; ++i) a.depths[i] = detail::metadata_int(cfg.values[i], "depth");
  a.width = detail::metadata_int(cfg.values[4], "width");
  a.stage3_lark = detail::metadata_int(cfg.values[5], "stage3_lark");
  a.reparam.kernel_size = detail::metadata_int(cfg.values[6], "kernel size");
  a.ffn_ratio = detail::metadata_int(cfg.values[7], "ffn ratio");
  a.num_classes = detail::metadata_int(cfg.values[8], "classes");
  a.reparam.branches.clear();
  if (r.has("arch.branches")) {
    const NamedTensor& br = r.raw("arch.branches");
    if (br.shape.rank() != 2 || br.shape[1] != 2)
      throw FormatError(FormatError::Kind::kShapeMismatch, "arch.branches must be [n, 2]");
    for (Index i = 0; i < br.shape[0]; ++i)
      a.reparam.branches.push_back({detail::metadata_int(br.values[2 * i], "branch k"),
                                    detail::metadata_int(br.values[2 * i + 1], "branch r")});
  }
  for (const auto& row : kVariantTable)
    if (row.depths == a.depths && row.width == a.width && row.stage3_lark == a.stage3_lark) a.name = std::string(row.name);
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("invalid architecture: ") + e.what());
  }

  for (std::size_t s = 0; s < 4; ++s) {
    const Index c = a.stage_width(s);
    std::vector<std::pair<Index, Index>> convs;  // (in, out)
    if (s == 0)
      convs = {{3, a.width / 2}, {a.width / 2, a.width}};
    else
      convs = {{c / 2, c}};
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "down." + std::to_string(s) + "." + std::to_string(i);
      const auto [in, out] = convs[i];
      m.downsample[s].layers.push_back({r.kernel(p, Shape{out, in, 3, 3}), {2, 1, 1, 1}, r.optional_bn(p + ".bn", out)});
    }
    for (Index j = 0; j < a.depths[s]; ++j) {
      const std::string p = "stages." + std::to_string(s) + "." + std::to_string(j);
      BlockSpec<Scalar> b;
      b.kind = a.kind_at(s, j);
      const Index k = b.kind == BlockKind::kLarK ? a.reparam.kernel_size : 3;
      if (b.kind == BlockKind::kLarK && r.has(p + ".conv.main.weight")) {
        DilatedReparamBlock<Scalar> rb;
        rb.config = a.reparam;
        rb.main = r.kernel(p + ".conv.main", Shape{c, 1, k, k});
        rb.main_bn = r.bn(p + ".conv.main.bn", c);
        for (std::size_t i = 0; i < a.reparam.branches.size(); ++i) {
          const Index bk = a.reparam.branches[i].kernel_size;
          rb.branches.push_back(r.kernel(p + ".conv.branch." + std::to_string(i), Shape{c, 1, bk, bk}));
          rb.branch_bns.push_back(r.bn(p + ".conv.branch." + std::to_string(i) + ".bn", c));
        }
        b.reparam = std::move(rb);
      } else {
        b.dw = r.kernel(p + ".conv", Shape{c, 1, k, k});
      }
      b.conv_bn = r.optional_bn(p + ".norm", c);
      const Index red = c / SeParams<Scalar>::kReduction;
      b.se = {r.tensor(p + ".se.fc1.weight", Shape{red, c}), r.tensor(p + ".se.fc1.bias", Shape{red}),
              r.tensor(p + ".se.fc2.weight", Shape{c, red}), r.tensor(p + ".se.fc2.bias", Shape{c})};
      const Index h = c * a.ffn_ratio;
      b.ffn.expand = r.kernel(p + ".ffn.expand", Shape{h, c, 1, 1});
      b.ffn.grn = {r.tensor(p + ".ffn.grn.gamma", Shape{h}), r.tensor(p + ".ffn.grn.beta", Shape{h})};
      b.ffn.reduce = r.kernel(p + ".ffn.reduce", Shape{c, h, 1, 1});
      b.ffn_bn = r.optional_bn(p + ".ffn.norm", c);
      m.stages[s].push_back(std::move(b));
    }
  }
  if (a.num_classes > 0) {
    const Index c = a.stage_width(3);
    m.head = HeadParams<Scalar>{r.optional_bn("head.norm", c), r.tensor("head.fc.weight", Shape{a.num_classes, c}),
                                r.tensor("head.fc.bias", Shape{a.num_classes})};
  }
  r.finish();
  return m;
}

template <typename Scalar>
void save_weights(const Model<Scalar>& m, const std::filesystem::path& path, Dtype dtype = Dtype::kF32) {
  write_weights(path, model_to_named(m, dtype));
}

template <typename Scalar>
Model<Scalar> load_weights(const std::filesystem::path& path) {
  return model_from_named<Scalar>(read_weights(path));
}

}  // namespace ulk
