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

#include "jointpq/trainer.hpp"

#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

#include "json.hpp"

namespace jointpq {

namespace {

using DenseMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

void TrainConfig::validate() const {
  shape.validate();
  if (!(margin > 0.0)) throw ParameterError("margin must be positive");
  if (!(learning_rate > 0.0)) {
    throw ParameterError("learning rate must be positive");
  }
  if (batch_size < 2) throw ParameterError("batch size must be at least 2");
  if (total_steps == 0) throw ParameterError("total_steps must be positive");
  if (resolved_warm_steps() >= total_steps) {
    throw ParameterError("warm_steps must be smaller than total_steps");
  }
  if (rotation_period == 0) {
    throw ParameterError("rotation_period must be positive");
  }
  if (reg_weight < 0.0) throw ParameterError("lambda must be non-negative");
}

TwoTowerModel::TwoTowerModel(std::size_t queries, std::size_t items,
                             std::size_t dim, double init_scale,
                             double learning_rate, std::uint64_t seed)
    : query_table_(queries, dim), item_table_(items, dim) {
  Rng query_rng(seed, "query_init");
  for (float& v : query_table_.values()) {
    v = static_cast<float>(query_rng.uniform(-init_scale, init_scale));
  }
  Rng item_rng(seed, "item_init");
  for (float& v : item_table_.values()) {
    v = static_cast<float>(item_rng.uniform(-init_scale, init_scale));
  }
  const AdagradConfig opt{learning_rate, 1e-8};
  query_opt_ = AdagradState(query_table_.values().size(), opt);
  item_opt_ = AdagradState(item_table_.values().size(), opt);
}

TwoTowerModel::TwoTowerModel(Matrix query_table, Matrix item_table,
                             double learning_rate)
    : query_table_(std::move(query_table)), item_table_(std::move(item_table)) {
  check_same_dim(query_table_.cols(), item_table_.cols(), "tower widths");
  const AdagradConfig opt{learning_rate, 1e-8};
  query_opt_ = AdagradState(query_table_.values().size(), opt);
  item_opt_ = AdagradState(item_table_.values().size(), opt);
}

double score(std::span<const float> query, std::span<const float> item) {
  return cosine(query, item);
}

HingeResult hinge_loss_inbatch(const Matrix& scores, double margin) {
  HingeResult out;
  hinge_loss_inbatch(scores, margin, out);
  return out;
}

void hinge_loss_inbatch(const Matrix& scores, double margin, HingeResult& out) {
  const std::size_t b = scores.rows();
  if (scores.cols() != b) throw DimensionError("hinge: score matrix not square");
  if (b < 2) throw ParameterError("hinge: batch needs at least 2 rows");
  if (out.grad.rows() != b || out.grad.cols() != b) out.grad = Matrix(b, b);
  const double inv = 1.0 / static_cast<double>(b * (b - 1));
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double positive = scores(i, i);
    std::size_t violations = 0;
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      const double slack = margin - positive + scores(i, j);
      if (j != i && slack > 0.0) {
        total += slack;
        g[j] = static_cast<float>(inv);
        ++violations;
      } else {
        g[j] = 0.0f;
      }
    }
    g[i] = static_cast<float>(-static_cast<double>(violations) * inv);
  }
  out.loss = total * inv;
}

const char* phase_name(Phase phase) {
  return phase == Phase::kWarm ? "warm" : "joint";
}

BatchGradients compute_batch_gradients(const TwoTowerModel& model,
                                       const QuantizerLayer* layer,
                                       std::span<const PositivePair> batch,
                                       Phase phase, const TrainConfig& config,
                                       BatchScratch* scratch) {
  const std::size_t b = batch.size();
  const std::size_t d = model.dim();
  if (phase == Phase::kJoint && layer == nullptr) {
    throw StateError("joint phase without an indexing layer");
  }
  BatchGradients out;
  out.emitted_items = Matrix(b, d);
  out.grad_emitted = Matrix(b, d);
  out.grad_items = Matrix(b, d);
  out.grad_queries = Matrix(b, d);

  if (phase == Phase::kJoint) {
    out.centroid_grads = layer->zero_gradients();
    out.rotated = Matrix(b, d);
    out.errors = Matrix(b, d);
    out.codes.reserve(b);
    const double scale = config.reg_weight / static_cast<double>(b);
    double reg = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
      const Quantized q = layer->full_quantize(model.item_table().row(batch[r].item));
      std::copy(q.value.begin(), q.value.end(), out.emitted_items.row(r).begin());
      auto xr = out.rotated.row(r);
      auto err = out.errors.row(r);
      for (std::size_t t = 0; t < d; ++t) {
        xr[t] = q.rotated[t];
        err[t] = q.reconstruction[t] - q.rotated[t];
      }
      reg += layer->accumulate_reg_grads(q, scale, out.centroid_grads);
      out.codes.push_back(q.code);
    }
    out.reg_loss = reg / static_cast<double>(b);
  } else {
    for (std::size_t r = 0; r < b; ++r) {
      auto src = model.item_table().row(batch[r].item);
      std::copy(src.begin(), src.end(), out.emitted_items.row(r).begin());
    }
  }

  // Scores and their gradients as dense products over unit rows.
  std::vector<double> q_norm(b), e_norm(b);
  DenseMatrix qn(b, d), en(b, d);
  for (std::size_t r = 0; r < b; ++r) {
    auto q = model.query_table().row(batch[r].query);
    auto e = out.emitted_items.row(r);
    q_norm[r] = norm(q);
    e_norm[r] = norm(e);
    if (q_norm[r] == 0.0 || e_norm[r] == 0.0) {
      throw DegenerateInputError("zero-norm embedding in training batch");
    }
    for (std::size_t t = 0; t < d; ++t) {
      qn(r, t) = static_cast<float>(q[t] / q_norm[r]);
      en(r, t) = static_cast<float>(e[t] / e_norm[r]);
    }
  }
  BatchScratch local;
  BatchScratch& work = scratch != nullptr ? *scratch : local;
  if (work.scores.rows() != b || work.scores.cols() != b) work.scores = Matrix(b, b);
  Eigen::Map<DenseMatrix> s(work.scores.values().data(), static_cast<Eigen::Index>(b),
                            static_cast<Eigen::Index>(b));
  s.noalias() = qn * en.transpose();
  hinge_loss_inbatch(work.scores, config.margin, work.hinge);
  out.hinge_loss = work.hinge.loss;

  // ∂cos(a, e)/∂a = (ê − cos·â)/|a|, and symmetrically for e.
  const Eigen::Map<const DenseMatrix> g(work.hinge.grad.values().data(),
                                        static_cast<Eigen::Index>(b),
                                        static_cast<Eigen::Index>(b));
  Eigen::VectorXf row_gs = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(b));
  Eigen::VectorXf col_gs = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const float gsij = g(i, j) * s(i, j);
      row_gs(i) += gsij;
      col_gs(j) += gsij;
    }
  }
  DenseMatrix gq(b, d), ge(b, d);
  gq.noalias() = g * en;
  ge.noalias() = g.transpose() * qn;
  for (std::size_t r = 0; r < b; ++r) {
    gq.row(r) = (gq.row(r) - row_gs(r) * qn.row(r)) / static_cast<float>(q_norm[r]);
    ge.row(r) = (ge.row(r) - col_gs(r) * en.row(r)) / static_cast<float>(e_norm[r]);
  }
  for (std::size_t r = 0; r < b; ++r) {
    auto gq_row = out.grad_queries.row(r);
    auto ge_row = out.grad_emitted.row(r);
    for (std::size_t t = 0; t < d; ++t) {
      gq_row[t] = gq(r, t);
      ge_row[t] = ge(r, t);
    }
    if (phase == Phase::kJoint) {
      straight_through_backward(ge_row, out.grad_items.row(r));
    } else {
      std::copy(ge_row.begin(), ge_row.end(), out.grad_items.row(r).begin());
    }
  }
  return out;
}

namespace {

/// Sums gradient rows that hit the same table row, then applies one Adagrad
/// step per distinct row in first-appearance order.
void apply_row_gradients(Matrix& table, AdagradState& opt,
                         std::span<const std::uint32_t> rows,
                         const Matrix& grads) {
  const std::size_t d = table.cols();
  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<std::uint32_t> order;
  std::vector<float> summed;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto [it, inserted] = slot.emplace(rows[r], order.size());
    if (inserted) {
      order.push_back(rows[r]);
      summed.insert(summed.end(), d, 0.0f);
    }
    float* acc = summed.data() + it->second * d;
    auto g = grads.row(r);
    for (std::size_t t = 0; t < d; ++t) acc[t] += g[t];
  }
  for (std::size_t s = 0; s < order.size(); ++s) {
    opt.step(table.row(order[s]),
             std::span<const float>(summed.data() + s * d, d),
             static_cast<std::size_t>(order[s]) * d);
  }
}

}  // namespace

StepMetrics train_step(TwoTowerModel& model, QuantizerLayer* layer,
                       std::span<const PositivePair> batch, Phase phase,
                       const TrainConfig& config, Rng& rotation_rng,
                       bool rotation_due, BatchScratch* scratch) {
  BatchGradients g =
      compute_batch_gradients(model, layer, batch, phase, config, scratch);

  std::vector<std::uint32_t> query_rows(batch.size()), item_rows(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    query_rows[r] = batch[r].query;
    item_rows[r] = batch[r].item;
  }
  apply_row_gradients(model.query_table(), model.query_optimizer(), query_rows,
                      g.grad_queries);
  apply_row_gradients(model.item_table(), model.item_optimizer(), item_rows,
                      g.grad_items);

  StepMetrics m;
  m.phase = phase;
  m.hinge_loss = g.hinge_loss;
  m.total_loss = g.hinge_loss;
  if (phase == Phase::kJoint) {
    layer->apply_gradients(g.centroid_grads);
    m.reg_loss = g.reg_loss;
    m.mean_distortion = g.reg_loss;
    m.total_loss += config.reg_weight * g.reg_loss;
    std::unordered_set<std::uint32_t> used;
    for (const auto& c : g.codes) used.insert(c.coarse);
    m.coarse_utilization = static_cast<double>(used.size()) /
                           static_cast<double>(layer->shape().coarse);
    if (rotation_due && layer->rotation_enabled()) {
      const RotationUpdateResult r = steepest_update(
          layer->rotation(), g.rotated, g.errors, config.rotation, rotation_rng);
      m.rotation_updated = r.applied;
    }
  }
  return m;
}

std::string to_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["phase"] = phase_name(m.phase);
  j["hinge_loss"] = m.hinge_loss;
  j["reg_loss"] = m.reg_loss;
  j["mean_distortion"] = m.mean_distortion;
  j["coarse_utilization"] = m.coarse_utilization;
  return j.dump();
}

Trainer::Trainer(const PairDataset& data, const TrainConfig& config)
    : config_(config),
      pairs_(data.pairs),
      batch_rng_(config.seed, "batches"),
      rotation_rng_(config.seed, "rotation") {
  config_.validate();
  if (pairs_.empty()) throw IngestError("training data has no pairs");
  for (const auto& p : pairs_) {
    if (p.query >= data.queries.size() || p.item >= data.items.size()) {
      throw IngestError("pair references an id outside the vocabulary");
    }
  }
  model_ = TwoTowerModel(data.queries.size(), data.items.size(),
                         config_.shape.dim, config_.init_scale,
                         config_.learning_rate, config_.seed);
  order_.resize(pairs_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  batch_rng_.shuffle(order_);
}

std::vector<PositivePair> Trainer::next_batch() {
  std::vector<PositivePair> batch;
  batch.reserve(config_.batch_size);
  while (batch.size() < config_.batch_size) {
    if (cursor_ == order_.size()) {
      batch_rng_.shuffle(order_);
      cursor_ = 0;
    }
    batch.push_back(pairs_[order_[cursor_++]]);
  }
  return batch;
}

void Trainer::record(const StepMetrics& m, std::ostream* log) {
  log_.push_back(m);
  if (log != nullptr) *log << to_json_line(m) << '\n';
}

void Trainer::run_warm(std::size_t until, std::ostream* log) {
  while (step_ < until) {
    const auto batch = next_batch();
    StepMetrics m = train_step(model_, nullptr, batch, Phase::kWarm, config_,
                               rotation_rng_, false, &scratch_);
    m.step = step_++;
    record(m, log);
  }
}

void Trainer::attach_layer() {
  layer_.emplace(config_.shape, config_.rotation_enabled,
                 AdagradConfig{config_.learning_rate, 1e-8});
  if (config_.cold_start) {
    Rng rng(config_.seed, "cold_start");
    layer_->cold_start(config_.cold_start_stddev, rng);
  } else {
    Rng rng(config_.seed, "warm_start");
    layer_->warm_start(model_.item_table(), config_.kmeans, rng);
  }
}

void Trainer::run_joint(std::size_t until, std::ostream* log) {
  if (!layer_) throw StateError("joint phase requested before attach_layer");
  while (step_ < until) {
    const auto batch = next_batch();
    const bool due = config_.rotation_enabled &&
                     (joint_steps_ + 1) % config_.rotation_period == 0;
    StepMetrics m = train_step(model_, &*layer_, batch, Phase::kJoint, config_,
                               rotation_rng_, due, &scratch_);
    ++joint_steps_;
    m.step = step_++;
    record(m, log);
  }
}

void Trainer::run(std::ostream* log) {
  run_warm(config_.resolved_warm_steps(), log);
  attach_layer();
  run_joint(config_.total_steps, log);
}

TrainingRun run_training(const PairDataset& data, const TrainConfig& config,
                         std::ostream* log) {
  Trainer trainer(data, config);
  trainer.run(log);
  return {trainer.model(), *trainer.layer(), trainer.log()};
}

}  // namespace jointpq
