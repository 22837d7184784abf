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

#include "jointpq/eval.hpp"

#include <algorithm>
#include <unordered_set>

namespace jointpq {

namespace {

std::size_t hits_in_top_k(const EvalRecord& r, std::size_t k) {
  const std::unordered_set<std::uint32_t> relevant(r.relevant.begin(),
                                                   r.relevant.end());
  const std::size_t top = std::min(k, r.retrieved.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) {
    if (relevant.contains(r.retrieved[i])) ++hits;
  }
  return hits;
}

}  // namespace

double precision_at_k(std::span<const EvalRecord> records, std::size_t k) {
  if (k == 0) throw ParameterError("precision@k needs k >= 1");
  if (records.empty()) throw ParameterError("precision@k of no records");
  double total = 0.0;
  for (const auto& r : records) {
    total += static_cast<double>(hits_in_top_k(r, k)) / static_cast<double>(k);
  }
  return total / static_cast<double>(records.size());
}

RecallResult recall_at_k(std::span<const EvalRecord> records, std::size_t k) {
  if (k == 0) throw ParameterError("recall@k needs k >= 1");
  RecallResult out;
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& r : records) {
    if (r.relevant.empty()) {
      ++out.skipped;
      continue;
    }
    const std::unordered_set<std::uint32_t> unique(r.relevant.begin(),
                                                   r.relevant.end());
    total += static_cast<double>(hits_in_top_k(r, k)) /
             static_cast<double>(unique.size());
    ++counted;
  }
  if (counted == 0) throw ParameterError("recall@k: no record has relevant items");
  out.value = total / static_cast<double>(counted);
  return out;
}

double mean_distortion(const QuantizerLayer& layer, const Matrix& embeddings) {
  if (embeddings.rows() == 0) throw ParameterError("mean_distortion: no rows");
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const Quantized q = layer.full_quantize(embeddings.row(i));
    total += l2_sq(q.value, embeddings.row(i));
  }
  return total / static_cast<double>(embeddings.rows());
}

Utilization coarse_utilization(const EmbeddingIndex& index) {
  Utilization u;
  u.total = index.shape().coarse;
  for (const auto& list : index.lists()) {
    if (!list.empty()) ++u.used;
  }
  return u;
}

}  // namespace jointpq
