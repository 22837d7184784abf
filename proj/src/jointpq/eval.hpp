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

#include "jointpq/index.hpp"
#include "jointpq/quantizer.hpp"

namespace jointpq {

/// One query's ground truth and ranked retrieval, as item ordinals. Relevant
/// items unknown to the index still count, under ordinals past the index
/// size.
struct EvalRecord {
  std::uint32_t query = 0;
  std::vector<std::uint32_t> relevant;
  std::vector<std::uint32_t> retrieved;
};

/// Mean of |top_k ∩ relevant| / k. The denominator is always k.
double precision_at_k(std::span<const EvalRecord> records, std::size_t k);

struct RecallResult {
  double value = 0.0;
  /// Records left out because their relevant set was empty.
  std::size_t skipped = 0;
};

/// Mean of |top_k ∩ relevant| / |relevant| over records with a non-empty
/// relevant set.
RecallResult recall_at_k(std::span<const EvalRecord> records, std::size_t k);

/// Mean ‖𝒯(x) − x‖² over the rows of `embeddings`.
double mean_distortion(const QuantizerLayer& layer, const Matrix& embeddings);

struct Utilization {
  std::size_t used = 0;
  std::size_t total = 0;
  double fraction() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(used) / static_cast<double>(total);
  }
};

/// Non-empty inverted lists out of J.
Utilization coarse_utilization(const EmbeddingIndex& index);

}  // namespace jointpq
