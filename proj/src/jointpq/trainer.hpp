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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jointpq/dataset.hpp"
#include "jointpq/quantizer.hpp"

namespace jointpq {

struct TrainConfig {
  LayerShape shape{64, 256, 16, 8};
  double margin = 0.1;
  double learning_rate = 0.01;
  std::size_t batch_size = 1024;
  /// Steps without the indexing layer; unset means 20% of total_steps.
  std::optional<std::size_t> warm_steps;
  std::size_t total_steps = 2000;
  /// λ, the weight of the mean distortion term.
  double reg_weight = 0.1;
  std::size_t rotation_period = 100;
  bool rotation_enabled = true;
  /// Random-normal centroids instead of k-means at the phase boundary.
  bool cold_start = false;
  double cold_start_stddev = 1.0;
  /// Embedding rows start uniform in [−init_scale, init_scale].
  double init_scale = 0.05;
  std::uint64_t seed = 42;
  KMeansConfig kmeans;
  RotationUpdateConfig rotation;

  std::size_t resolved_warm_steps() const noexcept {
    return warm_steps ? *warm_steps : total_steps / 5;
  }
  void validate() const;
};

/// Query tower Q and item tower S as embedding tables, each with Adagrad
/// state.
class TwoTowerModel {
 public:
  TwoTowerModel() = default;
  TwoTowerModel(std::size_t queries, std::size_t items, std::size_t dim,
                double init_scale, double learning_rate, std::uint64_t seed);
  /// Wraps existing tables with fresh optimizer state.
  TwoTowerModel(Matrix query_table, Matrix item_table, double learning_rate);

  std::size_t dim() const noexcept { return query_table_.cols(); }
  const Matrix& query_table() const noexcept { return query_table_; }
  Matrix& query_table() noexcept { return query_table_; }
  const Matrix& item_table() const noexcept { return item_table_; }
  Matrix& item_table() noexcept { return item_table_; }
  AdagradState& query_optimizer() noexcept { return query_opt_; }
  AdagradState& item_optimizer() noexcept { return item_opt_; }

 private:
  Matrix query_table_;
  Matrix item_table_;
  AdagradState query_opt_;
  AdagradState item_opt_;
};

/// f(q, s): cosine between tower outputs.
double score(std::span<const float> query, std::span<const float> item);

struct HingeResult {
  double loss = 0.0;
  /// ∂loss/∂scores, same shape as the score matrix.
  Matrix grad;
};

/// Mean over ordered pairs (i, j ≠ i) of max(0, margin − S_ii + S_ij), where
/// S_ii is the positive score of row i and S_ij its in-batch negatives.
HingeResult hinge_loss_inbatch(const Matrix& scores, double margin);
/// Same, writing into `out` and reusing its gradient storage.
void hinge_loss_inbatch(const Matrix& scores, double margin, HingeResult& out);

enum class Phase { kWarm, kJoint };
const char* phase_name(Phase phase);

/// Everything a training step computes before touching parameters.
struct BatchGradients {
  /// Item embeddings fed to the scorer: raw rows, or 𝒯(x) in the joint phase.
  Matrix emitted_items;
  Matrix grad_emitted;
  /// Gradients w.r.t. the raw item rows after straight-through routing.
  Matrix grad_items;
  Matrix grad_queries;
  double hinge_loss = 0.0;
  /// Mean L_reg over the batch (joint phase only).
  double reg_loss = 0.0;
  std::vector<ItemCode> codes;
  CentroidGradients centroid_grads;
  /// Rotated item embeddings and their quantization errors, for rotation
  /// updates.
  Matrix rotated;
  Matrix errors;
};

/// B×B buffers kept between steps.
struct BatchScratch {
  Matrix scores;
  HingeResult hinge;
};

BatchGradients compute_batch_gradients(const TwoTowerModel& model,
                                       const QuantizerLayer* layer,
                                       std::span<const PositivePair> batch,
                                       Phase phase, const TrainConfig& config,
                                       BatchScratch* scratch = nullptr);

struct StepMetrics {
  std::size_t step = 0;
  Phase phase = Phase::kWarm;
  double hinge_loss = 0.0;
  double reg_loss = 0.0;
  double total_loss = 0.0;
  double mean_distortion = 0.0;
  /// Distinct coarse codes in the batch over J (joint phase only).
  double coarse_utilization = 0.0;
  bool rotation_updated = false;
};

/// One optimizer step. `rotation_due` requests a steepest rotation update on
/// this batch (ignored when rotation is disabled or in the warm phase).
StepMetrics train_step(TwoTowerModel& model, QuantizerLayer* layer,
                       std::span<const PositivePair> batch, Phase phase,
                       const TrainConfig& config, Rng& rotation_rng,
                       bool rotation_due, BatchScratch* scratch = nullptr);

std::string to_json_line(const StepMetrics& m);

/// Two-phase schedule over a dataset. Copyable, so a run can be branched at
/// the warm/joint boundary.
class Trainer {
 public:
  Trainer(const PairDataset& data, const TrainConfig& config);

  const TrainConfig& config() const noexcept { return config_; }
  const TwoTowerModel& model() const noexcept { return model_; }
  TwoTowerModel& model() noexcept { return model_; }
  const std::optional<QuantizerLayer>& layer() const noexcept { return layer_; }
  std::optional<QuantizerLayer>& layer() noexcept { return layer_; }
  std::size_t step() const noexcept { return step_; }
  const std::vector<StepMetrics>& log() const noexcept { return log_; }

  /// Runs steps without the indexing layer until `until` (exclusive).
  void run_warm(std::size_t until, std::ostream* log = nullptr);
  /// Plugs in the layer: k-means warm start, or random centroids when
  /// cold_start is set.
  void attach_layer();
  void run_joint(std::size_t until, std::ostream* log = nullptr);
  /// Full schedule: warm steps, attach, joint steps to total_steps.
  void run(std::ostream* log = nullptr);

 private:
  std::vector<PositivePair> next_batch();
  void record(const StepMetrics& m, std::ostream* log);

  TrainConfig config_;
  std::vector<PositivePair> pairs_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng batch_rng_;
  Rng rotation_rng_;
  TwoTowerModel model_;
  std::optional<QuantizerLayer> layer_;
  std::size_t step_ = 0;
  std::size_t joint_steps_ = 0;
  std::vector<StepMetrics> log_;
  BatchScratch scratch_;
};

struct TrainingRun {
  TwoTowerModel model;
  QuantizerLayer layer;
  std::vector<StepMetrics> log;
};

TrainingRun run_training(const PairDataset& data, const TrainConfig& config,
                         std::ostream* log = nullptr);

}  // namespace jointpq
