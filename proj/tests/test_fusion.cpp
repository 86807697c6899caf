#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ulk/fusion.hpp"

using ulk::FusionPadding;
using ulk::Index;
using ulk::Shape;
using T = ulk::Tensor<double>;

TEST(Fusion, ValidMatchesOracle) {
  ulk::Rng rng(1);
  std::uniform_int_distribution<Index> pick(1, 20);
  for (int i = 0; i < 100; ++i) {
    const Index l1 = pick(rng), l2 = 1 + pick(rng) % l1, d = pick(rng);
    const T x = ulk::random_normal<double>(Shape{l1, d}, rng);
    const T y = ulk::random_normal<double>(Shape{l2, d}, rng);
    const T z = ulk::asym_conv_fuse(x, y);
    ASSERT_EQ(z.shape(), (Shape{l1 - l2 + 1, d}));
    EXPECT_LE(ulk::max_relative_error(z, oracle::fuse(x, y, false)), 1e-13);
  }
}

TEST(Fusion, SameMatchesOracleAndKeepsLength) {
  ulk::Rng rng(2);
  std::uniform_int_distribution<Index> pick(1, 20);
  for (int i = 0; i < 100; ++i) {
    const Index l1 = pick(rng), l2 = pick(rng), d = pick(rng);
    const T x = ulk::random_normal<double>(Shape{l1, d}, rng);
    const T y = ulk::random_normal<double>(Shape{l2, d}, rng);
    const T z = ulk::asym_conv_fuse(x, y, FusionPadding::kSame);
    ASSERT_EQ(z.shape(), (Shape{l1, d}));
    EXPECT_LE(ulk::max_relative_error(z, oracle::fuse(x, y, true)), 1e-13);
  }
}

TEST(Fusion, SingleTapIsColumnScaling) {
  ulk::Rng rng(3);
  const T x = ulk::random_normal<double>(Shape{9, 4}, rng);
  const T y = ulk::random_normal<double>(Shape{1, 4}, rng);
  const T z = ulk::asym_conv_fuse(x, y);
  for (Index i = 0; i < 9; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(z(i, j), x(i, j) * y(0, j));
}

TEST(Fusion, Errors) {
  EXPECT_THROW(ulk::asym_conv_fuse(T(Shape{3, 4}), T(Shape{5, 4})), ulk::ConfigError);
  EXPECT_THROW(ulk::asym_conv_fuse(T(Shape{6, 4}), T(Shape{2, 3})), ulk::ShapeError);
  EXPECT_THROW(ulk::asym_conv_fuse(T(Shape{6, 4, 1}), T(Shape{2, 4})), ulk::ShapeError);
}

TEST(Fusion, FlattenedFeatureMaps) {
  // [H, W, C] maps flatten to [H*W, C] tokens.
  ulk::Rng rng(4);
  const T a = ulk::random_normal<double>(Shape{4, 5, 3}, rng);
  const T b = ulk::random_normal<double>(Shape{2, 3, 3}, rng);
  const T z = ulk::asym_conv_fuse(ulk::reshape(a, Shape{20, 3}), ulk::reshape(b, Shape{6, 3}));
  EXPECT_EQ(z.shape(), (Shape{15, 3}));
}
