#include <gtest/gtest.h>

#include <cmath>

#include "ulk/arch.hpp"

using ulk::BlockKind;
using ulk::Index;
using ulk::Shape;
using T = ulk::Tensor<double>;

TEST(VariantTable, Rows) {
  EXPECT_EQ(ulk::kVariantTable.size(), 10u);
  const auto n = ulk::arch_spec("N");
  EXPECT_EQ(n.depths, (std::array<Index, 4>{2, 2, 8, 2}));
  EXPECT_EQ(n.width, 80);
  EXPECT_EQ(n.stage3_lark, 8);
  const auto b = ulk::arch_spec("B");
  EXPECT_EQ(b.depths[2], 27);
  EXPECT_EQ(b.stage3_lark, 9);
  EXPECT_EQ(b.stage_width(3), 1024);
  EXPECT_THROW(ulk::arch_spec("Z"), ulk::ConfigError);
}

TEST(ArchSpec, StageKinds) {
  for (const auto& row : ulk::kVariantTable) {
    const auto spec = ulk::arch_spec(row.name);
    Index lark = 0;
    for (Index i = 0; i < spec.depths[2]; ++i) lark += spec.kind_at(2, i) == BlockKind::kLarK;
    EXPECT_EQ(lark, spec.stage3_lark) << row.name;
    EXPECT_EQ(spec.kind_at(2, 0), BlockKind::kLarK);
    for (Index i = 0; i < spec.depths[0]; ++i) EXPECT_EQ(spec.kind_at(0, i), BlockKind::kSmaK);
    EXPECT_EQ(spec.kind_at(1, 0), BlockKind::kLarK);
    EXPECT_EQ(spec.kind_at(3, 0), BlockKind::kLarK);
  }
}

TEST(ArchSpec, StageThreeInterleaveForDeepVariants) {
  // 9 LarK among 27: every third block, starting with the first.
  const auto s = ulk::arch_spec("S");
  for (Index i = 0; i < 27; ++i) EXPECT_EQ(s.kind_at(2, i) == BlockKind::kLarK, i % 3 == 0) << i;
  // 9 LarK among 18: every other block.
  const auto t = ulk::arch_spec("T");
  for (Index i = 0; i < 18; ++i) EXPECT_EQ(t.kind_at(2, i) == BlockKind::kLarK, i % 2 == 0) << i;
}

TEST(ArchSpec, Validation) {
  auto spec = ulk::arch_spec("A");
  spec.width = 18;
  EXPECT_THROW(spec.validate(), ulk::ConfigError);
  spec = ulk::arch_spec("A");
  spec.stage3_lark = 7;
  EXPECT_THROW(spec.validate(), ulk::ConfigError);
  spec = ulk::arch_spec("A");
  spec.depths[1] = 0;
  EXPECT_THROW(spec.validate(), ulk::ConfigError);
}

TEST(ParamCount, ClosedFormMatchesMaterializedModel) {
  for (const char* name : {"A", "N", "T"}) {
    auto spec = ulk::arch_spec(name, 10);
    spec.width = 8;
    const auto model = ulk::build_model<double>(spec, 1);
    const auto closed = ulk::count_params(spec);
    const auto built = ulk::count_params(model);
    EXPECT_EQ(closed.downsample, built.downsample) << name;
    EXPECT_EQ(closed.stages, built.stages) << name;
    EXPECT_EQ(closed.head, built.head) << name;
  }
}

TEST(ParamCount, WithinTenPercentAndMonotone) {
  Index previous = 0;
  for (const auto& row : ulk::kVariantTable) {
    if (row.name == "H") continue;
    const auto report = ulk::count_params(ulk::arch_spec(row.name));
    const double m = report.total_without_head() / 1e6;
    EXPECT_LE(std::abs(m - row.reference_params_m) / row.reference_params_m, 0.10) << row.name << " " << m;
    EXPECT_GT(report.total_without_head(), previous) << row.name;
    EXPECT_GT(report.total_with_head(), report.total_without_head());
    previous = report.total_without_head();
  }
}

TEST(Model, SeedDeterminism) {
  auto spec = ulk::arch_spec("A");
  spec.width = 8;
  EXPECT_EQ(ulk::build_model<double>(spec, 5), ulk::build_model<double>(spec, 5));
  EXPECT_FALSE(ulk::build_model<double>(spec, 5) == ulk::build_model<double>(spec, 6));
}

TEST(Model, FeatureShapesAndKernelSchedule) {
  auto spec = ulk::arch_spec("A");
  spec.width = 8;
  const auto model = ulk::build_model<double>(spec, 2);
  ulk::Rng rng(3);
  const T x = ulk::random_normal<double>(Shape{2, 3, 64, 32}, rng);
  EXPECT_EQ(ulk::model_features(model, x).shape(), (Shape{2, 64, 2, 1}));
  EXPECT_EQ(ulk::max_kernel_per_stage(model), (std::array<Index, 4>{3, 13, 13, 13}));
  EXPECT_THROW(ulk::model_features(model, T(Shape{1, 3, 48, 64})), ulk::ShapeError);
  EXPECT_THROW(ulk::model_features(model, T(Shape{1, 4, 64, 64})), ulk::ShapeError);
}

TEST(Model, MergedModelIsForwardEquivalentWithHead) {
  auto spec = ulk::arch_spec("P", 7);
  spec.width = 8;
  const auto model = ulk::build_model<double>(spec, 9, {0.2, true});
  const auto merged = ulk::merge_model(model);
  EXPECT_TRUE(merged.merged());
  EXPECT_FALSE(model.merged());
  EXPECT_EQ(ulk::merge_model(merged), merged);
  ulk::Rng rng(4);
  const T x = ulk::random_normal<double>(Shape{2, 3, 32, 32}, rng);
  const T logits = ulk::model_forward(model, x);
  EXPECT_EQ(logits.shape(), (Shape{2, 7}));
  EXPECT_LE(ulk::max_relative_error(ulk::model_forward(merged, x), logits), 1e-9);
  EXPECT_LT(ulk::count_params(merged).total_with_head(), ulk::count_params(model).total_with_head());
}
