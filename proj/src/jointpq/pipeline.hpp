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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jointpq/config.hpp"
#include "jointpq/dataset.hpp"
#include "jointpq/eval.hpp"
#include "jointpq/index.hpp"
#include "jointpq/trainer.hpp"

namespace jointpq {

/// A trained two-tower model with its vocabularies and, after the joint
/// phase, its indexing layer.
///
/// Model file layout, little-endian:
///   "PQMD" | u32 version | u32 d, n_queries, n_items | u8 has_layer
///   | query ids, item ids (u16 length + bytes each)
///   | query table, item table (f32 row-major)
///   | if has_layer: u32 J, K, D | u8 rotation_enabled | rotation d×d f32
///     | coarse J×d f32 | PQ D×K×(d/D) f32
struct TrainedModel {
  Vocabulary queries;
  Vocabulary items;
  Matrix query_table;
  Matrix item_table;
  std::optional<QuantizerLayer> layer;

  std::optional<Vector> query_embedding(std::string_view id) const;
};

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::span<const std::uint8_t> bytes);

struct TrainOutputs {
  TrainedModel model;
  EmbeddingIndex index;
  double build_seconds = 0.0;
  std::vector<StepMetrics> log;
};

/// run_training followed by the encode-only index build.
TrainOutputs train_and_build(const PairDataset& data, const RunConfig& config,
                             std::ostream* log = nullptr);

/// Writes the index, re-loads it and checks the header; throws on mismatch.
void save_index_checked(const EmbeddingIndex& index,
                        const std::filesystem::path& path);

struct MetricRow {
  std::string method;
  std::size_t nprobe = 0;
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Metric grid plus scalar facts. Timing facts are kept apart so two runs
/// with equal seeds produce equal reports once timings are left out.
struct Report {
  std::vector<MetricRow> rows;
  std::vector<std::pair<std::string, double>> facts;
  std::vector<std::pair<std::string, double>> timings;
  std::vector<std::string> config;

  const MetricRow* find(std::string_view method, std::size_t nprobe,
                        std::size_t k) const;
  std::optional<double> fact(std::string_view name) const;
  /// Flat `key=value` lines.
  std::string to_text(bool with_timings = true) const;
  /// One JSON object.
  std::string to_json(bool with_timings = true) const;
};

/// p@k / r@k grid over every (nprobe, k). Eval queries missing from the
/// model are counted in the `unknown_queries` fact and left out.
Report evaluate_index(const EmbeddingIndex& index, const TrainedModel& model,
                      const PairDataset& eval, std::span<const std::size_t> ks,
                      std::span<const std::size_t> nprobes,
                      const std::string& method = "index");

/// Joint-versus-offline comparison from one shared warm-up: branch A plugs in
/// the layer and trains jointly; branch B keeps training without it and is
/// indexed afterwards by offline_build. Both are scored on `eval`.
Report compare(const PairDataset& train, const PairDataset& eval,
               const RunConfig& config);

}  // namespace jointpq
