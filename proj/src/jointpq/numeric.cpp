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

#include "jointpq/numeric.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace jointpq {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kParameter: return "parameter error";
    case ErrorCode::kDegenerate: return "degenerate input";
    case ErrorCode::kCorruption: return "corruption error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kIngest: return "ingestion error";
    case ErrorCode::kState: return "state error";
  }
  return "unknown error";
}

void check_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) +
                         " does not match " + std::to_string(b));
  }
}

// Eight independent double lanes: short add chains that the compiler can
// vectorize without -ffast-math reassociation. The final combination order is
// fixed, so results do not depend on the vector width.
namespace {

constexpr std::size_t kLanes = 8;

double combine(const double (&s)[kLanes]) noexcept {
  return ((s[0] + s[4]) + (s[1] + s[5])) + ((s[2] + s[6]) + (s[3] + s[7]));
}

template <typename A>
double dot_lanes(const A* a, const float* b, std::size_t n) noexcept {
  double s[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      s[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
    }
  }
  for (std::size_t j = 0; i < n; ++i, ++j) {
    s[j] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return combine(s);
}

}  // namespace

double l2_sq_unchecked(const float* a, const float* b, std::size_t n) noexcept {
  double s[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      const double d = static_cast<double>(a[i + j]) - static_cast<double>(b[i + j]);
      s[j] += d * d;
    }
  }
  for (std::size_t j = 0; i < n; ++i, ++j) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s[j] += d * d;
  }
  return combine(s);
}

double dot_unchecked(const float* a, const float* b, std::size_t n) noexcept {
  return dot_lanes(a, b, n);
}

double dot_unchecked(const double* a, const float* b, std::size_t n) noexcept {
  return dot_lanes(a, b, n);
}

double l2_sq(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "l2_sq");
  return l2_sq_unchecked(a.data(), b.data(), a.size());
}

double dot(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "dot");
  return dot_unchecked(a.data(), b.data(), a.size());
}

double norm(std::span<const float> a) {
  return std::sqrt(dot_unchecked(a.data(), a.data(), a.size()));
}

double cosine(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "cosine");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine of a zero-norm vector");
  }
  return dot_unchecked(a.data(), b.data(), a.size()) / (na * nb);
}

bool all_finite(std::span<const float> v) noexcept {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void adagrad_step(float& param, float grad, float& accumulator,
                  const AdagradConfig& config) noexcept {
  const double g = grad;
  const double acc = static_cast<double>(accumulator) + g * g;
  accumulator = static_cast<float>(acc);
  param = static_cast<float>(param - config.learning_rate * g /
                                         std::sqrt(acc + config.epsilon));
}

void AdagradState::step(std::span<float> params, std::span<const float> grads,
                        std::size_t offset) {
  check_same_dim(params.size(), grads.size(), "adagrad step");
  if (offset + params.size() > accumulator_.size()) {
    throw ParameterError("adagrad slice out of range");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    adagrad_step(params[i], grads[i], accumulator_[offset + i], config_);
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept {
  // FNV-1a over the label, then mixed with the root.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(root) ^ h);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= std::numeric_limits<double>::min()) u1 = uniform();
  const double u2 = uniform();
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ParameterError("Rng::below needs a positive bound");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

}  // namespace jointpq
