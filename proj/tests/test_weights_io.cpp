#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "oracles.hpp"
#include "ulk/arch_io.hpp"

using ulk::Dtype;
using ulk::FormatError;
using ulk::NamedTensor;
using ulk::Shape;

namespace {

FormatError::Kind decode_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    ulk::decode_weights(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded on corrupt input";
  return FormatError::Kind::kIo;
}

std::vector<NamedTensor> sample_tensors() {
  ulk::Rng rng(1);
  return {ulk::to_named("a", ulk::random_normal<double>(Shape{2, 3}, rng), Dtype::kF64),
          ulk::to_named("b.weight", ulk::random_normal<float>(Shape{4, 1, 3, 3}, rng), Dtype::kF32),
          ulk::to_named("c", ulk::Tensor<double>::constant(Shape{1}, 0.5), Dtype::kF32)};
}

}  // namespace

TEST(Codec, HeaderLayout) {
  const auto bytes = ulk::encode_weights({ulk::to_named("x", ulk::Tensor<double>::constant(Shape{2}, 1.5))});
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "ULKW", 4), 0);
  EXPECT_EQ(bytes[4], 1);  // version, little endian
  EXPECT_EQ(bytes[8], 1);  // count
  // name_len u16 + "x" + dtype + rank + one u32 dim + two f32 values
  EXPECT_EQ(bytes.size(), 12u + 2 + 1 + 1 + 1 + 4 + 8);
  float v;
  std::memcpy(&v, bytes.data() + bytes.size() - 4, 4);
  EXPECT_EQ(v, 1.5f);
}

TEST(Codec, RoundTripIsBitExact) {
  auto tensors = sample_tensors();
  // f32 payloads round on encode; normalize the expectation accordingly.
  for (auto& t : tensors)
    if (t.dtype == Dtype::kF32)
      for (double& v : t.values) v = static_cast<float>(v);
  const auto bytes = ulk::encode_weights(tensors);
  const auto decoded = ulk::decode_weights(bytes);
  EXPECT_EQ(decoded, tensors);
  EXPECT_EQ(ulk::encode_weights(decoded), bytes);
}

TEST(Codec, RejectsBadMagicAndVersion) {
  auto bytes = ulk::encode_weights(sample_tensors());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(decode_kind(bad), FormatError::Kind::kBadMagic);
  bad = bytes;
  bad[4] = 2;
  EXPECT_EQ(decode_kind(bad), FormatError::Kind::kUnsupportedVersion);
}

TEST(Codec, EveryTruncationIsRejected) {
  const auto bytes = ulk::encode_weights(sample_tensors());
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    const auto kind = decode_kind(prefix);
    EXPECT_TRUE(kind == FormatError::Kind::kTruncated || (n < 4 && kind == FormatError::Kind::kBadMagic)) << "length " << n;
  }
}

TEST(Codec, RejectsTrailingBytesAndDuplicates) {
  auto bytes = ulk::encode_weights(sample_tensors());
  bytes.push_back(0);
  EXPECT_EQ(decode_kind(bytes), FormatError::Kind::kMalformed);
  auto dup = sample_tensors();
  dup[1].name = "a";
  EXPECT_EQ(decode_kind(ulk::encode_weights(dup)), FormatError::Kind::kMalformed);
}

TEST(Codec, RejectsUnknownDtype) {
  auto bytes = ulk::encode_weights({ulk::to_named("x", ulk::Tensor<double>(Shape{1}))});
  bytes[12 + 2 + 1] = 7;
  EXPECT_EQ(decode_kind(bytes), FormatError::Kind::kMalformed);
}

TEST(Files, MissingFileIsIoError) {
  try {
    ulk::read_weights("/nonexistent/dir/none.ulkw");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kIo);
  }
}

TEST(Files, ModelRoundTripF64IsExact) {
  auto spec = ulk::arch_spec("A", 5);
  spec.width = 8;
  const auto model = ulk::build_model<double>(spec, 3, {0.2, true});
  const auto path = oracle::scratch("model");
  ulk::save_weights(model, path, Dtype::kF64);
  auto loaded = ulk::load_weights<double>(path);
  EXPECT_EQ(loaded.spec.name, "custom");
  loaded.spec.name = model.spec.name;
  EXPECT_EQ(loaded, model);

  const auto merged = ulk::merge_model(model);
  ulk::save_weights(merged, path, Dtype::kF64);
  auto loaded_merged = ulk::load_weights<double>(path);
  loaded_merged.spec.name = model.spec.name;
  EXPECT_EQ(loaded_merged, merged);
  std::filesystem::remove(path);
}

TEST(Files, FullWidthVariantKeepsItsName) {
  const auto spec = ulk::arch_spec("A");
  const auto names = ulk::model_to_named(ulk::build_model<float>(spec, 0));
  EXPECT_EQ(ulk::model_from_named<float>(names).spec.name, "A");
}

TEST(Files, ShapeMismatchAndUnexpectedTensors) {
  auto spec = ulk::arch_spec("A");
  spec.width = 8;
  auto named = ulk::model_to_named(ulk::build_model<double>(spec, 0));
  auto bad = named;
  for (auto& t : bad)
    if (t.name == "stages.0.0.conv.weight") t.shape = Shape{8, 1, 9, 1};
  try {
    ulk::model_from_named<double>(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kShapeMismatch);
  }
  bad = named;
  bad.push_back(ulk::to_named("extra", ulk::Tensor<double>(Shape{1})));
  EXPECT_THROW(ulk::model_from_named<double>(bad), FormatError);
  bad = named;
  bad.erase(bad.begin() + 5);
  EXPECT_THROW(ulk::model_from_named<double>(bad), FormatError);
}
