#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ulk/tensor.hpp"

namespace ulk {

/// ULKW little-endian named-tensor container.
///
///   "ULKW" | version u32 | count u32 |
///   count x { name_len u16 | name | dtype u8 | rank u8 | dims u32 x rank | payload }
///
/// dtype 0 is f32 and dtype 1 is f64. Values are held as double in memory;
/// f32 entries convert exactly in both directions, so decode/encode is
/// byte-stable.
enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1 };

inline constexpr char kWeightsMagic[4] = {'U', 'L', 'K', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
  Dtype dtype = Dtype::kF32;

  bool operator==(const NamedTensor&) const = default;
};

std::vector<std::uint8_t> encode_weights(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_weights(std::span<const std::uint8_t> bytes);

void write_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_weights(const std::filesystem::path& path);

template <typename Scalar>
NamedTensor to_named(std::string name, const Tensor<Scalar>& t, Dtype dtype = Dtype::kF32) {
  return {std::move(name), t.shape(), std::vector<double>(t.data().begin(), t.data().end()), dtype};
}

template <typename Scalar>
Tensor<Scalar> from_named(const NamedTensor& nt) {
  return Tensor<Scalar>(nt.shape, std::vector<Scalar>(nt.values.begin(), nt.values.end()));
}

}  // namespace ulk
