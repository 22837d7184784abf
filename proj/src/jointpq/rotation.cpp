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

#include "jointpq/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace jointpq {

namespace {

std::vector<double> identity(std::size_t dim) {
  std::vector<double> m(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) m[i * dim + i] = 1.0;
  return m;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> candidate_pairs(
    std::size_t dim, std::size_t wanted, Rng& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  const std::size_t total = dim * (dim - 1) / 2;
  if (wanted >= total) {
    pairs.reserve(total);
    for (std::uint32_t i = 0; i < dim; ++i) {
      for (std::uint32_t j = i + 1; j < dim; ++j) pairs.emplace_back(i, j);
    }
    return pairs;
  }
  std::unordered_set<std::uint64_t> seen;
  pairs.reserve(wanted);
  while (pairs.size() < wanted) {
    auto i = static_cast<std::uint32_t>(rng.below(dim));
    auto j = static_cast<std::uint32_t>(rng.below(dim - 1));
    if (j >= i) ++j;
    if (i > j) std::swap(i, j);
    if (seen.insert((static_cast<std::uint64_t>(i) << 32) | j).second) {
      pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

}  // namespace

RotationMatrix::RotationMatrix(std::size_t dim)
    : dim_(dim), dense_(identity(dim)) {}

RotationMatrix RotationMatrix::from_dense(std::size_t dim,
                                          std::span<const float> row_major) {
  check_same_dim(row_major.size(), dim * dim, "rotation from dense");
  RotationMatrix r(dim);
  r.base_.assign(row_major.begin(), row_major.end());
  r.dense_ = r.base_;
  return r;
}

bool RotationMatrix::is_identity() const noexcept {
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 0; j < dim_; ++j) {
      if (dense_[i * dim_ + j] != (i == j ? 1.0 : 0.0)) return false;
    }
  }
  return true;
}

void RotationMatrix::apply_to_rows(std::vector<double>& m, std::size_t dim,
                                   const GivensFactor& f) {
  const double c = std::cos(f.theta);
  const double s = std::sin(f.theta);
  double* ri = m.data() + static_cast<std::size_t>(f.axis_i) * dim;
  double* rj = m.data() + static_cast<std::size_t>(f.axis_j) * dim;
  for (std::size_t k = 0; k < dim; ++k) {
    const double a = ri[k];
    const double b = rj[k];
    ri[k] = c * a - s * b;
    rj[k] = s * a + c * b;
  }
}

void RotationMatrix::append(const GivensFactor& factor) {
  if (factor.axis_i >= factor.axis_j || factor.axis_j >= dim_) {
    throw ParameterError("Givens factor needs 0 <= i < j < d, got (" +
                         std::to_string(factor.axis_i) + ", " +
                         std::to_string(factor.axis_j) + ")");
  }
  if (!std::isfinite(factor.theta)) {
    throw ParameterError("Givens factor angle must be finite");
  }
  GivensFactor f = factor;
  f.theta = std::remainder(f.theta, 2.0 * M_PI);
  if (f.theta <= -M_PI) f.theta += 2.0 * M_PI;
  factors_.push_back(f);
  if (factors_.size() % kRefreshEvery == 0) {
    dense_ = product_of_factors();
  } else {
    apply_to_rows(dense_, dim_, f);
  }
}

std::vector<double> RotationMatrix::product_of_factors() const {
  std::vector<double> m = base_.empty() ? identity(dim_) : base_;
  for (const auto& f : factors_) apply_to_rows(m, dim_, f);
  return m;
}

void RotationMatrix::rotate_into(std::span<const float> x,
                                 std::span<float> out) const {
  check_same_dim(x.size(), dim_, "rotate");
  check_same_dim(out.size(), dim_, "rotate output");
  for (std::size_t i = 0; i < dim_; ++i) {
    out[i] = static_cast<float>(dot_unchecked(dense_.data() + i * dim_, x.data(), dim_));
  }
}

void RotationMatrix::rotate_back_into(std::span<const float> a,
                                      std::span<float> out) const {
  check_same_dim(a.size(), dim_, "rotate_back");
  check_same_dim(out.size(), dim_, "rotate_back output");
  std::vector<double> acc(dim_, 0.0);
  for (std::size_t i = 0; i < dim_; ++i) {
    const double* row = dense_.data() + i * dim_;
    const double ai = a[i];
    for (std::size_t k = 0; k < dim_; ++k) acc[k] += row[k] * ai;
  }
  for (std::size_t k = 0; k < dim_; ++k) out[k] = static_cast<float>(acc[k]);
}

Vector RotationMatrix::rotate(std::span<const float> x) const {
  Vector out(dim_);
  rotate_into(x, out);
  return out;
}

Vector RotationMatrix::rotate_back(std::span<const float> a) const {
  Vector out(dim_);
  rotate_back_into(a, out);
  return out;
}

double RotationMatrix::orthonormality_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 0; j < dim_; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) {
        acc += dense_[i * dim_ + k] * dense_[j * dim_ + k];
      }
      worst = std::max(worst, std::abs(acc - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

std::vector<float> RotationMatrix::dense_float() const {
  return {dense_.begin(), dense_.end()};
}

double givens_grad_at_zero(std::span<const float> err, std::span<const float> xr,
                           std::size_t i, std::size_t j) {
  check_same_dim(err.size(), xr.size(), "givens_grad_at_zero");
  if (i == j) throw ParameterError("givens_grad_at_zero: axes must differ");
  if (i >= xr.size() || j >= xr.size()) {
    throw DimensionError("givens_grad_at_zero: axis out of range");
  }
  return 2.0 * (static_cast<double>(err[i]) * xr[j] -
                static_cast<double>(err[j]) * xr[i]);
}

RotationUpdateResult steepest_update(RotationMatrix& rotation, const Matrix& xr,
                                     const Matrix& err,
                                     const RotationUpdateConfig& config,
                                     Rng& rng) {
  const std::size_t dim = rotation.dim();
  if (xr.rows() == 0) throw ParameterError("steepest_update: empty batch");
  if (err.rows() != xr.rows()) {
    throw DimensionError("steepest_update: xr and err batch sizes differ");
  }
  check_same_dim(xr.cols(), dim, "steepest_update xr");
  check_same_dim(err.cols(), dim, "steepest_update err");
  if (dim < 2) throw ParameterError("steepest_update: needs d >= 2");

  RotationUpdateResult result;
  const auto pairs = candidate_pairs(dim, config.candidate_pairs, rng);
  double best = -1.0;
  for (const auto& [i, j] : pairs) {
    double g = 0.0;
    for (std::size_t b = 0; b < xr.rows(); ++b) {
      g += givens_grad_at_zero(err.row(b), xr.row(b), i, j);
    }
    if (std::abs(g) > best) {
      best = std::abs(g);
      result.factor.axis_i = i;
      result.factor.axis_j = j;
      result.gradient = g;
    }
  }
  const std::uint32_t ai = result.factor.axis_i;
  const std::uint32_t aj = result.factor.axis_j;

  // With codes frozen, only coordinates i and j move:
  //   f(θ) = const − 2·(a·cosθ + b·sinθ)
  // where a = Σ q_i x_i + q_j x_j and b = Σ q_j x_i − q_i x_j, q = xr + err.
  double a = 0.0;
  double bsum = 0.0;
  for (std::size_t r = 0; r < xr.rows(); ++r) {
    const double xi = xr(r, ai), xj = xr(r, aj);
    const double qi = xi + err(r, ai), qj = xj + err(r, aj);
    a += qi * xi + qj * xj;
    bsum += qj * xi - qi * xj;
  }
  auto objective = [&](double theta) {
    return -2.0 * (a * std::cos(theta) + bsum * std::sin(theta));
  };

  constexpr double kInvPhi = 0.6180339887498949;
  double lo = -config.max_angle;
  double hi = config.max_angle;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  for (std::size_t it = 0; it < config.line_search_iterations; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = objective(x2);
    }
  }
  double theta = f1 <= f2 ? x1 : x2;
  double f_best = std::min(f1, f2);
  // The bracket never evaluates its ends; a clipped optimum sits there.
  for (const double edge : {-config.max_angle, config.max_angle}) {
    const double f = objective(edge);
    if (f < f_best) {
      f_best = f;
      theta = edge;
    }
  }

  // Exact before/after distortions, summed in the same order so the
  // acceptance test below is a strict comparison.
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  double before = 0.0;
  double after = 0.0;
  for (std::size_t r = 0; r < xr.rows(); ++r) {
    const double xi = xr(r, ai), xj = xr(r, aj);
    const double qi = xi + err(r, ai), qj = xj + err(r, aj);
    const double ni = qi - (c * xi - s * xj);
    const double nj = qj - (s * xi + c * xj);
    double row_before = 0.0;
    double row_after = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double e = err(r, k);
      row_before += e * e;
      if (k == ai) {
        row_after += ni * ni;
      } else if (k == aj) {
        row_after += nj * nj;
      } else {
        row_after += e * e;
      }
    }
    before += row_before;
    after += row_after;
  }
  result.distortion_before = before;
  if (theta != 0.0 && after < before) {
    result.factor.theta = theta;
    result.distortion_after = after;
    result.applied = true;
    rotation.append(result.factor);
  } else {
    result.factor.theta = 0.0;
    result.distortion_after = before;
  }
  return result;
}

}  // namespace jointpq
