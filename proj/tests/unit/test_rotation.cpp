// Copyright 2026-present the jointpq authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "jointpq/error.hpp"
#include "jointpq/rotation.hpp"
#include "test_util.hpp"

namespace jointpq {
namespace {

RotationMatrix random_rotation(std::size_t d, std::size_t factors, Rng& rng) {
  RotationMatrix r(d);
  for (std::size_t f = 0; f < factors; ++f) {
    const auto i = static_cast<std::uint32_t>(rng.below(d));
    auto j = static_cast<std::uint32_t>(rng.below(d - 1));
    if (j >= i) ++j;
    r.append({std::min(i, j), std::max(i, j), rng.uniform(-3.1, 3.1)});
  }
  return r;
}

// Fixed-code distortion Σ‖(xr + err) − G(θ)·xr‖² with G on axes (i, j).
double rotated_distortion(const Matrix& xr, const Matrix& err, std::size_t i,
                          std::size_t j, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  double total = 0.0;
  for (std::size_t r = 0; r < xr.rows(); ++r) {
    for (std::size_t t = 0; t < xr.cols(); ++t) {
      double moved = xr(r, t);
      if (t == i) moved = c * xr(r, i) - s * xr(r, j);
      if (t == j) moved = s * xr(r, i) + c * xr(r, j);
      const double diff = double(xr(r, t)) + double(err(r, t)) - moved;
      total += diff * diff;
    }
  }
  return total;
}

TEST(Rotation, IdentityLeavesVectorsAlone) {
  RotationMatrix r(5);
  EXPECT_TRUE(r.is_identity());
  const Vector x{1, -2, 3, 0.5f, 7};
  EXPECT_EQ(r.rotate(x), x);
  EXPECT_EQ(r.rotate_back(x), x);
}

TEST(Rotation, QuarterTurn) {
  RotationMatrix r(2);
  r.append({0, 1, std::numbers::pi / 2});
  const Vector y = r.rotate(Vector{1, 0});
  EXPECT_NEAR(y[0], 0.0, 1e-7);
  EXPECT_NEAR(y[1], 1.0, 1e-7);
}

TEST(Rotation, PreservesNorms) {
  Rng rng(1);
  const RotationMatrix r = random_rotation(32, 300, rng);
  for (int t = 0; t < 100; ++t) {
    const Vector x = testing::random_vector(32, rng);
    EXPECT_NEAR(norm(r.rotate(x)), norm(x), 1e-5);
  }
}

TEST(Rotation, RoundTrip) {
  Rng rng(2);
  const RotationMatrix r = random_rotation(16, 100, rng);
  for (int t = 0; t < 50; ++t) {
    const Vector x = testing::random_vector(16, rng);
    const Vector back = r.rotate_back(r.rotate(x));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-5);
  }
}

TEST(Rotation, RotateBackEqualsNegativeAngle) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const double theta = rng.uniform(-3.0, 3.0);
    RotationMatrix plus(6), minus(6);
    plus.append({1, 4, theta});
    minus.append({1, 4, -theta});
    const Vector x = testing::random_vector(6, rng);
    const Vector a = plus.rotate_back(x), b = minus.rotate(x);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
  }
}

TEST(Rotation, AnglesAreNormalized) {
  RotationMatrix r(3);
  r.append({0, 2, 3 * std::numbers::pi});
  r.append({0, 1, -std::numbers::pi});
  for (const auto& f : r.factors()) {
    EXPECT_GT(f.theta, -std::numbers::pi);
    EXPECT_LE(f.theta, std::numbers::pi);
  }
}

TEST(Rotation, RejectsBadFactors) {
  RotationMatrix r(4);
  EXPECT_THROW(r.append({2, 2, 0.1}), ParameterError);
  EXPECT_THROW(r.append({3, 1, 0.1}), ParameterError);
  EXPECT_THROW(r.append({1, 4, 0.1}), ParameterError);
  EXPECT_THROW(r.append({0, 1, std::nan("")}), ParameterError);
  EXPECT_THROW(r.rotate(Vector{1, 2, 3}), DimensionError);
}

TEST(Rotation, CacheMatchesFactorProductAcrossRefresh) {
  Rng rng(4);
  const RotationMatrix r = random_rotation(12, RotationMatrix::kRefreshEvery + 250, rng);
  const auto product = r.product_of_factors();
  for (std::size_t i = 0; i < product.size(); ++i) {
    EXPECT_NEAR(r.dense()[i], product[i], 1e-6);
  }
  EXPECT_LE(r.orthonormality_error(), 1e-5);
}

TEST(Rotation, FromDenseKeepsTheMatrix) {
  Rng rng(5);
  const RotationMatrix r = random_rotation(8, 40, rng);
  const auto dense = r.dense_float();
  const RotationMatrix back = RotationMatrix::from_dense(8, dense);
  EXPECT_EQ(back.dense_float(), dense);
  EXPECT_TRUE(back.factors().empty());
  EXPECT_THROW(RotationMatrix::from_dense(3, dense), DimensionError);
}

TEST(GivensGrad, ZeroErrorGivesZero) {
  const Vector err(4, 0.0f), xr{1, 2, 3, 4};
  EXPECT_EQ(givens_grad_at_zero(err, xr, 0, 3), 0.0);
}

TEST(GivensGrad, HandCaseMatchesFiniteDifference) {
  const Vector err{1, 0}, xr{0, 1};
  EXPECT_EQ(givens_grad_at_zero(err, xr, 0, 1), 2.0);
  Matrix x(1, 2), e(1, 2);
  x(0, 1) = 1.0f;
  e(0, 0) = 1.0f;
  const double h = 1e-4;
  const double fd =
      (rotated_distortion(x, e, 0, 1, h) - rotated_distortion(x, e, 0, 1, -h)) / (2 * h);
  EXPECT_NEAR(fd, 2.0, 1e-3);
}

TEST(GivensGrad, SwappingAxesFlipsSign) {
  Rng rng(6);
  const Vector err = testing::random_vector(5, rng), xr = testing::random_vector(5, rng);
  EXPECT_DOUBLE_EQ(givens_grad_at_zero(err, xr, 1, 3),
                   -givens_grad_at_zero(err, xr, 3, 1));
  EXPECT_THROW(givens_grad_at_zero(err, xr, 2, 2), ParameterError);
}

TEST(GivensGrad, MatchesFiniteDifferencesOnRandomCases) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 2 + rng.below(10);
    const std::size_t i = rng.below(d);
    std::size_t j = rng.below(d - 1);
    if (j >= i) ++j;
    Matrix x = testing::random_matrix(1, d, rng), e = testing::random_matrix(1, d, rng);
    const double g = givens_grad_at_zero(e.row(0), x.row(0), i, j);
    const double h = 1e-4;
    const double fd =
        (rotated_distortion(x, e, i, j, h) - rotated_distortion(x, e, i, j, -h)) / (2 * h);
    EXPECT_NEAR(fd, g, 1e-3 * std::max(1.0, std::abs(g))) << "case " << t;
  }
}

TEST(SteepestUpdate, PerfectQuantizationChangesNothing) {
  Rng rng(8);
  const Matrix xr = testing::random_matrix(20, 6, rng);
  const Matrix err(20, 6);
  RotationMatrix r(6);
  const RotationUpdateResult res = steepest_update(r, xr, err, RotationUpdateConfig{}, rng);
  EXPECT_FALSE(res.applied);
  EXPECT_EQ(res.factor.theta, 0.0);
  EXPECT_TRUE(r.is_identity());
  EXPECT_TRUE(r.factors().empty());
}

TEST(SteepestUpdate, FortyFiveDegreeBatch) {
  // Points on the diagonal quantized onto the x axis: a 45° turn aligns them.
  Matrix xr(4, 2), err(4, 2);
  const float s[] = {1.0f, 2.0f, -1.5f, 0.5f};
  for (std::size_t r = 0; r < 4; ++r) {
    const float a = s[r] / std::sqrt(2.0f);
    xr(r, 0) = a;
    xr(r, 1) = a;
    err(r, 0) = s[r] - a;  // reconstruction (s, 0)
    err(r, 1) = -a;
  }
  RotationMatrix rot(2);
  Rng rng(9);
  const RotationUpdateResult res = steepest_update(rot, xr, err, RotationUpdateConfig{}, rng);
  ASSERT_TRUE(res.applied);
  EXPECT_LT(res.distortion_after, res.distortion_before);

  double best = std::numeric_limits<double>::infinity(), best_theta = 0.0;
  for (int g = -4000; g <= 4000; ++g) {
    const double theta = g * (std::numbers::pi / 8) / 4000.0;
    const double v = rotated_distortion(xr, err, 0, 1, theta);
    if (v < best) {
      best = v;
      best_theta = theta;
    }
  }
  EXPECT_NEAR(res.distortion_after, best, 1e-4);
  EXPECT_NEAR(res.factor.theta, best_theta, 1e-3);
  EXPECT_NEAR(rotated_distortion(xr, err, 0, 1, res.factor.theta), res.distortion_after,
              1e-6);
}

TEST(SteepestUpdate, RepeatedUpdatesNeverIncreaseDistortion) {
  Rng rng(10);
  const std::size_t d = 8;
  Matrix x = testing::random_matrix(64, d, rng);
  // Frozen reconstructions: x snapped to a coarse grid.
  Matrix rec(64, d);
  for (std::size_t i = 0; i < rec.values().size(); ++i) {
    rec.values()[i] = std::round(x.values()[i]);
  }
  RotationMatrix rot(d);
  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 30; ++step) {
    Matrix xr(64, d), err(64, d);
    for (std::size_t r = 0; r < 64; ++r) {
      rot.rotate_into(x.row(r), xr.row(r));
      for (std::size_t t = 0; t < d; ++t) err(r, t) = rec(r, t) - xr(r, t);
    }
    const RotationUpdateResult res = steepest_update(rot, xr, err, RotationUpdateConfig{}, rng);
    EXPECT_LE(res.distortion_after, res.distortion_before);
    EXPECT_LE(res.distortion_before, previous * (1 + 1e-5) + 1e-9);
    previous = res.distortion_after;
  }
  EXPECT_LE(rot.orthonormality_error(), 1e-5);
}

TEST(SteepestUpdate, RejectsEmptyOrMismatchedBatches) {
  RotationMatrix rot(4);
  Rng rng(11);
  EXPECT_THROW(steepest_update(rot, Matrix(0, 4), Matrix(0, 4), {}, rng), ParameterError);
  EXPECT_THROW(steepest_update(rot, Matrix(2, 4), Matrix(3, 4), {}, rng), DimensionError);
  EXPECT_THROW(steepest_update(rot, Matrix(2, 3), Matrix(2, 3), {}, rng), DimensionError);
}

}  // namespace
}  // namespace jointpq
