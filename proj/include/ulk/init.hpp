#pragma once

#include <cmath>
#include <random>

#include "ulk/tensor.hpp"

namespace ulk {

using Rng = std::mt19937_64;

// Samples are drawn in double and rounded to Scalar, so float and double
// tensors built from the same seed hold the same values up to rounding.

template <typename Scalar>
Tensor<Scalar> random_normal(Shape shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Scalar> t(std::move(shape));
  for (Scalar& v : t.data()) v = static_cast<Scalar>(dist(rng));
  return t;
}

/// Normal(0, stddev) resampled until it lands within two standard deviations.
template <typename Scalar>
Tensor<Scalar> trunc_normal(Shape shape, Rng& rng, double stddev = 0.02) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<Scalar> t(std::move(shape));
  for (Scalar& v : t.data()) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<Scalar>(z * stddev);
  }
  return t;
}

template <typename Scalar>
Tensor<Scalar> random_uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<Scalar> t(std::move(shape));
  for (Scalar& v : t.data()) v = static_cast<Scalar>(dist(rng));
  return t;
}

}  // namespace ulk
