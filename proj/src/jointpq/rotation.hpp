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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jointpq/numeric.hpp"

namespace jointpq {

struct GivensFactor {
  std::uint32_t axis_i = 0;
  std::uint32_t axis_j = 1;
  double theta = 0.0;
};

/// Orthonormal d×d matrix kept as an ordered product of Givens factors on top
/// of a base matrix (identity unless loaded from a file), together with the
/// dense product. Appending factor G turns R into G·R.
class RotationMatrix {
 public:
  static constexpr std::size_t kRefreshEvery = 1000;

  explicit RotationMatrix(std::size_t dim = 0);
  /// Starts from an explicit dense matrix (row-major); no factors.
  static RotationMatrix from_dense(std::size_t dim,
                                   std::span<const float> row_major);

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<GivensFactor>& factors() const noexcept { return factors_; }
  double at(std::size_t i, std::size_t j) const { return dense_[i * dim_ + j]; }
  std::span<const double> dense() const noexcept { return dense_; }
  bool is_identity() const noexcept;

  void append(const GivensFactor& factor);

  /// R·x.
  Vector rotate(std::span<const float> x) const;
  /// Rᵀ·a.
  Vector rotate_back(std::span<const float> a) const;
  void rotate_into(std::span<const float> x, std::span<float> out) const;
  void rotate_back_into(std::span<const float> a, std::span<float> out) const;

  /// Dense product rebuilt by applying every factor, in order, to the base.
  std::vector<double> product_of_factors() const;
  /// max |R·Rᵀ − I| over all entries.
  double orthonormality_error() const;
  /// Row-major float copy, the form stored in index files.
  std::vector<float> dense_float() const;

 private:
  static void apply_to_rows(std::vector<double>& m, std::size_t dim,
                            const GivensFactor& f);

  std::size_t dim_ = 0;
  std::vector<double> base_;
  std::vector<GivensFactor> factors_;
  std::vector<double> dense_;
};

/// ∂/∂θ at θ = 0 of ‖err‖² when a Givens factor on axes (i, j) is appended,
/// with err = quantized − xr held at fixed codes: 2·(err_i·xr_j − err_j·xr_i).
double givens_grad_at_zero(std::span<const float> err, std::span<const float> xr,
                           std::size_t i, std::size_t j);

struct RotationUpdateConfig {
  /// Axis pairs examined per update; capped at d(d−1)/2.
  std::size_t candidate_pairs = 64;
  std::size_t line_search_iterations = 20;
  /// Line search covers [−max_angle, max_angle].
  double max_angle = 0.39269908169872414;  // π/8
};

struct RotationUpdateResult {
  GivensFactor factor;
  /// Summed batch gradient of the selected pair.
  double gradient = 0.0;
  double distortion_before = 0.0;
  double distortion_after = 0.0;
  bool applied = false;
};

/// One steepest block-coordinate step. Rows of `xr` are rotated inputs and
/// rows of `err` their quantization errors (reconstruction − xr) under codes
/// that stay frozen for the step. Picks the sampled axis pair with the largest
/// summed gradient magnitude, line-searches its angle, and appends the factor
/// when it strictly lowers the batch distortion.
RotationUpdateResult steepest_update(RotationMatrix& rotation, const Matrix& xr,
                                     const Matrix& err,
                                     const RotationUpdateConfig& config,
                                     Rng& rng);

}  // namespace jointpq
