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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "jointpq/error.hpp"

namespace jointpq {

using Vector = std::vector<float>;

/// Dense row-major float matrix. Rows are handed out as spans so kernels never
/// see raw pointer/length pairs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  float operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Kernels accumulate in double and return double; storage stays float.

double l2_sq(std::span<const float> a, std::span<const float> b);
double dot(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);

/// aᵀb / (‖a‖‖b‖). Throws DegenerateInputError when either norm is zero.
double cosine(std::span<const float> a, std::span<const float> b);

// Unchecked variants for hot loops; callers guarantee equal lengths.
double l2_sq_unchecked(const float* a, const float* b, std::size_t n) noexcept;
double dot_unchecked(const float* a, const float* b, std::size_t n) noexcept;
double dot_unchecked(const double* a, const float* b, std::size_t n) noexcept;

void check_same_dim(std::size_t a, std::size_t b, const char* what);
bool all_finite(std::span<const float> v) noexcept;

struct AdagradConfig {
  double learning_rate = 0.01;
  double epsilon = 1e-8;
};

/// Per-parameter accumulators of squared gradients.
class AdagradState {
 public:
  AdagradState() = default;
  AdagradState(std::size_t n, AdagradConfig config)
      : config_(config), accumulator_(n, 0.0f) {}

  const AdagradConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return accumulator_.size(); }
  std::span<float> accumulator() noexcept { return accumulator_; }
  std::span<const float> accumulator() const noexcept { return accumulator_; }

  /// Applies one Adagrad update to params[i] for every i with gradient
  /// grads[i]; `offset` selects where the slice starts in the accumulator.
  void step(std::span<float> params, std::span<const float> grads,
            std::size_t offset);

 private:
  AdagradConfig config_;
  std::vector<float> accumulator_;
};

/// Single-parameter Adagrad update: acc += g², w -= lr·g/√(acc + ε).
void adagrad_step(float& param, float grad, float& accumulator,
                  const AdagradConfig& config) noexcept;

/// Derives a stream seed from a root seed and a fixed label so that adding a
/// consumer never shifts another consumer's stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept;

/// Deterministic random stream. The engine is mt19937_64, whose output
/// sequence is fixed by the standard; the distributions are implemented here
/// because the standard library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view label)
      : engine_(derive_seed(root, label)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; one draw per call.
  double normal();
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace jointpq
