#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ulk/dwconv_blocked.hpp"
#include "ulk/parallel.hpp"

using ulk::ConvKernel;
using ulk::ConvParams;
using ulk::Index;
using ulk::Shape;
using T = ulk::Tensor<double>;

namespace {

struct Case {
  T x;
  ConvKernel<double> k;
  ConvParams p;
};

Case random_case(ulk::Rng& rng, bool depthwise) {
  std::uniform_int_distribution<Index> pick(0, 1 << 20);
  const Index groups = depthwise ? 1 + pick(rng) % 4 : 1 + pick(rng) % 2;
  const Index cin = depthwise ? groups : groups * (1 + pick(rng) % 3);
  const Index cout = depthwise ? groups : groups * (1 + pick(rng) % 3);
  const Index k = 1 + pick(rng) % 5, r = 1 + pick(rng) % 3, s = 1 + pick(rng) % 2;
  const Index pad = pick(rng) % 4;
  const Index ext = (k - 1) * r + 1;
  const Index h = std::max<Index>(ext, 1 + pick(rng) % 12), w = std::max<Index>(ext, 1 + pick(rng) % 12);
  Case c;
  c.x = ulk::random_normal<double>(Shape{1 + pick(rng) % 2, cin, h, w}, rng);
  c.k.weight = ulk::random_normal<double>(Shape{cout, cin / groups, k, k}, rng);
  if (pick(rng) % 2) c.k.bias = ulk::random_normal<double>(Shape{cout}, rng);
  c.p = {s, pad, r, groups};
  return c;
}

}  // namespace

TEST(ConvHelpers, SamePaddingAndExtent) {
  EXPECT_EQ(ulk::same_padding(3), 1);
  EXPECT_EQ(ulk::same_padding(5, 3), 6);
  EXPECT_THROW(ulk::same_padding(4), ulk::ConfigError);
  EXPECT_EQ(ulk::equivalent_kernel_size(7, 2), 13);
  EXPECT_EQ(ulk::conv_output_extent(32, 3, {2, 1, 1, 1}), 16);
}

TEST(ConvDirect, MatchesPaddedOracle) {
  ulk::Rng rng(100);
  for (int i = 0; i < 120; ++i) {
    const Case c = random_case(rng, i % 2 == 0);
    const T got = ulk::conv2d_direct(c.x, c.k, c.p);
    const T want = oracle::conv2d(c.x, c.k.weight, c.k.bias, c.p.stride, c.p.padding, c.p.dilation, c.p.groups);
    ASSERT_LE(ulk::max_relative_error(got, want), 1e-13) << "case " << i;
  }
}

TEST(ConvDirect, IdentityKernelPassesInputThrough) {
  ulk::Rng rng(1);
  const T x = ulk::random_normal<double>(Shape{2, 3, 5, 6}, rng);
  T w(Shape{3, 1, 1, 1});
  for (Index c = 0; c < 3; ++c) w(c, 0, 0, 0) = 1.0;
  EXPECT_EQ(ulk::conv2d_direct(x, {w, std::nullopt}, {1, 0, 1, 3}), x);
}

TEST(ConvDirect, ShapeErrors) {
  const T x(Shape{1, 4, 8, 8});
  EXPECT_THROW(ulk::conv2d_direct(x, {T(Shape{4, 3, 3, 3}), std::nullopt}, {1, 1, 1, 1}), ulk::Error);
  EXPECT_THROW(ulk::conv2d_direct(x, {T(Shape{3, 2, 3, 3}), std::nullopt}, {1, 1, 1, 2}), ulk::Error);
  EXPECT_THROW(ulk::conv2d_direct(x, {T(Shape{4, 4, 11, 11}), std::nullopt}, {1, 0, 1, 1}), ulk::Error);
  EXPECT_THROW(ulk::conv2d_direct(x, {T(Shape{4, 4, 3, 3}), T(Shape{3})}, {1, 1, 1, 1}), ulk::Error);
  EXPECT_THROW(ulk::conv2d_direct(x, {T(Shape{4, 4, 3, 3}), std::nullopt}, {0, 1, 1, 1}), ulk::Error);
}

TEST(DwBlocked, MatchesDirectInDouble) {
  ulk::Rng rng(7);
  std::uniform_int_distribution<Index> pick(1, 9);
  for (int i = 0; i < 150; ++i) {
    Case c = random_case(rng, true);
    c.p.groups = c.x.dim(1);
    c.k.weight = ulk::random_normal<double>(Shape{c.x.dim(1), 1, c.k.weight.dim(2), c.k.weight.dim(3)}, rng);
    c.k.bias.reset();
    const ulk::TileConfig tiles{pick(rng), pick(rng) * 4};
    const T got = ulk::dwconv2d_blocked(c.x, c.k, c.p, tiles);
    ASSERT_LE(ulk::max_relative_error(got, ulk::conv2d_direct(c.x, c.k, c.p)), 1e-13) << "case " << i;
  }
}

TEST(DwBlocked, MatchesDirectInFloat) {
  ulk::Rng rng(8);
  for (Index k : {3, 7, 13, 31}) {
    const auto x = ulk::random_normal<float>(Shape{2, 8, 40, 37}, rng);
    const ulk::ConvKernel<float> kern{ulk::random_normal<float>(Shape{8, 1, k, k}, rng, 1.0 / k), ulk::random_normal<float>(Shape{8}, rng)};
    const ConvParams p{1, ulk::same_padding(k), 1, 8};
    EXPECT_LE(ulk::max_relative_error(ulk::dwconv2d_blocked(x, kern, p), ulk::conv2d_direct(x, kern, p)), 1e-4) << "k=" << k;
  }
}

TEST(DwBlocked, IdentityKernel) {
  ulk::Rng rng(2);
  const T x = ulk::random_normal<double>(Shape{1, 4, 9, 70}, rng);
  const T w = T::constant(Shape{4, 1, 1, 1}, 1.0);
  EXPECT_EQ(ulk::dwconv2d_blocked(x, {w, std::nullopt}, {1, 0, 1, 4}), x);
}

TEST(DwBlocked, RejectsNonDepthwise) {
  const T x(Shape{1, 4, 8, 8});
  EXPECT_THROW(ulk::dwconv2d_blocked(x, {T(Shape{4, 4, 3, 3}), std::nullopt}, {1, 1, 1, 1}), ulk::ConfigError);
  EXPECT_THROW(ulk::dwconv2d_blocked(x, {T(Shape{4, 2, 3, 3}), std::nullopt}, {1, 1, 1, 2}), ulk::ConfigError);
}

TEST(DwBlocked, ResultIndependentOfWorkerCount) {
  ulk::Rng rng(9);
  const auto x = ulk::random_normal<float>(Shape{2, 6, 33, 33}, rng);
  const ulk::ConvKernel<float> k{ulk::random_normal<float>(Shape{6, 1, 9, 9}, rng), std::nullopt};
  const ConvParams p{1, 4, 1, 6};
  ulk::set_worker_count(1);
  const auto one = ulk::dwconv2d_blocked(x, k, p);
  ulk::set_worker_count(3);
  const auto three = ulk::dwconv2d_blocked(x, k, p);
  ulk::set_worker_count(1);
  EXPECT_EQ(one, three);
}

TEST(ConvTranspose, UnitKernelStrideInsertsZeros) {
  ulk::Rng rng(4);
  for (Index r = 1; r <= 4; ++r) {
    const T w = ulk::random_normal<double>(Shape{3, 2, 3, 4}, rng);
    const T one = T::constant(Shape{1, 1, 1, 1}, 1.0);
    // Treat each [kh, kw] slice as a 1-channel image.
    const T as_images = ulk::reshape(w, Shape{6, 1, 3, 4});
    const T got = ulk::conv_transpose2d(as_images, {one, std::nullopt}, r);
    const T want = ulk::reshape(oracle::dilate_by_zero_insertion(w, r), Shape{6, 1, 2 * r + 1, 3 * r + 1});
    EXPECT_EQ(got, want);
  }
}

TEST(ConvTranspose, AdjointOfStridedConv) {
  // <conv_s(x, k), y> == <x, convT_s(y, k)> for valid, unpadded correlation.
  ulk::Rng rng(12);
  for (Index s = 1; s <= 3; ++s) {
    const T k = ulk::random_normal<double>(Shape{2, 3, 3, 3}, rng);
    const T x = ulk::random_normal<double>(Shape{1, 3, 3 + 2 * s, 3 + 3 * s}, rng);
    const T y = ulk::conv2d_direct(x, {k, std::nullopt}, {s, 0, 1, 1});
    const T g = ulk::random_normal<double>(y.shape(), rng);
    // [C_out, C_in] of the forward conv is read as [C_in, C_out] by the transpose.
    const T back = ulk::conv_transpose2d(g, {k, std::nullopt}, s);
    double lhs = (y.array() * g.array()).sum();
    double rhs = 0.0;
    for (Index c = 0; c < 3; ++c)
      for (Index i = 0; i < x.dim(2); ++i)
        for (Index j = 0; j < x.dim(3); ++j) rhs += x(0, c, i, j) * back(0, c, i, j);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-12);
  }
}

TEST(InputGrad, MatchesFiniteDifferences) {
  ulk::Rng rng(21);
  for (int i = 0; i < 40; ++i) {
    Case c = random_case(rng, i % 2 == 0);
    c.x = ulk::random_normal<double>(Shape{1, c.x.dim(1), std::min<Index>(c.x.dim(2), 9), std::min<Index>(c.x.dim(3), 9)}, rng);
    const Index ext = (c.k.weight.dim(2) - 1) * c.p.dilation + 1;
    if (ext > c.x.dim(2) + 2 * c.p.padding || ext > c.x.dim(3) + 2 * c.p.padding) continue;
    const T y = ulk::conv2d_direct(c.x, c.k, c.p);
    const T g = ulk::random_normal<double>(y.shape(), rng);
    const T got = ulk::conv2d_input_grad(g, c.k, c.p, c.x.shape());
    const T want = oracle::finite_difference_input_grad(c.x, g, c.k, c.p);
    ASSERT_LE(ulk::max_relative_error(got, want), 1e-6) << "case " << i;
  }
}

TEST(InputGrad, SinglePixelScattersKernelPatch) {
  ulk::Rng rng(3);
  const T w = ulk::random_normal<double>(Shape{1, 1, 3, 3}, rng);
  T g(Shape{1, 1, 7, 7});
  g(0, 0, 3, 3) = 1.0;
  const T dx = ulk::conv2d_input_grad(g, {w, std::nullopt}, {1, 1, 1, 1}, Shape{1, 1, 7, 7});
  for (Index dy = -1; dy <= 1; ++dy)
    for (Index dxo = -1; dxo <= 1; ++dxo) EXPECT_EQ(dx(0, 0, 3 + dy, 3 + dxo), w(0, 0, 1 + dy, 1 + dxo));
  EXPECT_DOUBLE_EQ(dx.array().abs().sum(), w.array().abs().sum());
}

TEST(InputGrad, RejectsShapeMismatch) {
  const T g(Shape{1, 1, 5, 5});
  EXPECT_THROW(ulk::conv2d_input_grad(g, {T(Shape{1, 1, 3, 3}), std::nullopt}, {1, 1, 1, 1}, Shape{1, 1, 7, 7}), ulk::ShapeError);
}

TEST(Parallel, PropagatesExceptions) {
  ulk::set_worker_count(2);
  EXPECT_THROW(ulk::parallel_for(8, [](Index i) {
                 if (i == 5) throw ulk::ConfigError("boom");
               }),
               ulk::ConfigError);
  ulk::set_worker_count(1);
}
