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

#include "jointpq/kmeans.hpp"
#include "jointpq/numeric.hpp"
#include "jointpq/rotation.hpp"

namespace jointpq {

/// d: embedding width; J coarse centroids; K centroids per PQ sub-codebook;
/// D sub-spaces of width d / D.
struct LayerShape {
  std::size_t dim = 0;
  std::size_t coarse = 0;
  std::size_t pq_centroids = 0;
  std::size_t subspaces = 0;

  std::size_t sub_dim() const noexcept { return dim / subspaces; }
  /// Throws ParameterError unless the shape is usable.
  void validate() const;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Coarse code r plus one byte per PQ sub-space.
struct ItemCode {
  std::uint32_t coarse = 0;
  std::vector<std::uint8_t> pq;
  friend bool operator==(const ItemCode&, const ItemCode&) = default;
};

struct Quantized {
  /// 𝒯(x), in the original space.
  Vector value;
  ItemCode code;
  /// x' = R·x.
  Vector rotated;
  /// ρ(code), in the rotated space.
  Vector reconstruction;
  /// ‖ρ(code) − R·x‖².
  double distortion = 0.0;
};

/// Dense gradients for every centroid; rows follow the layer's storage.
struct CentroidGradients {
  Matrix coarse;
  Matrix pq;
};

/// The embedding indexing layer: rotation, coarse codebook and PQ
/// codebook. PQ centroid k of sub-space j lives at row j*K + k of `pq()`.
class QuantizerLayer {
 public:
  QuantizerLayer() = default;
  QuantizerLayer(const LayerShape& shape, bool rotation_enabled,
                 AdagradConfig optimizer = {});

  /// Reassembles a trained layer, e.g. from a model file.
  static QuantizerLayer from_parts(const LayerShape& shape,
                                   bool rotation_enabled,
                                   RotationMatrix rotation, Matrix coarse,
                                   Matrix pq, AdagradConfig optimizer = {});

  const LayerShape& shape() const noexcept { return shape_; }
  bool rotation_enabled() const noexcept { return rotation_enabled_; }

  const RotationMatrix& rotation() const noexcept { return rotation_; }
  RotationMatrix& rotation() noexcept { return rotation_; }
  const Matrix& coarse() const noexcept { return coarse_; }
  Matrix& coarse() noexcept { return coarse_; }
  const Matrix& pq() const noexcept { return pq_; }
  Matrix& pq() noexcept { return pq_; }

  std::span<const float> pq_centroid(std::size_t sub, std::size_t k) const {
    return pq_.row(sub * shape_.pq_centroids + k);
  }

  /// Nearest coarse centroid of an already-rotated vector.
  Nearest coarse_assign(std::span<const float> xr) const;
  /// Per-sub-space argmin over the PQ codebook.
  std::vector<std::uint8_t> pq_encode(std::span<const float> residual) const;
  void pq_encode_into(std::span<const float> residual,
                      std::span<std::uint8_t> out) const;
  /// ρ(r, c) = v_r + [v¹_{c¹}, …, v^D_{c^D}], in the rotated space.
  Vector decode(const ItemCode& code) const;
  void decode_into(const ItemCode& code, std::span<float> out) const;
  /// Codes for an already-rotated vector.
  ItemCode encode_rotated(std::span<const float> xr) const;

  /// 𝒯(x) = Rᵀ ρ(ψ(Rx), φ(Rx − v_ψ(Rx))).
  Quantized full_quantize(std::span<const float> x) const;

  /// L_reg for one input: ‖ρ(code) − R·x‖². Adds scale·∂L/∂centroid into
  /// `grads` (coarse row r gets the full vector, PQ rows get their slices).
  /// Nothing flows to x or R.
  double reg_loss_and_grads(std::span<const float> x, double scale,
                            CentroidGradients& grads) const;
  /// Same routing for an input that was already quantized.
  double accumulate_reg_grads(const Quantized& q, double scale,
                              CentroidGradients& grads) const;
  CentroidGradients zero_gradients() const;
  /// Adagrad step on both codebooks.
  void apply_gradients(const CentroidGradients& grads);

  /// Codebooks from k-means: coarse on the rotated items, then each PQ
  /// sub-codebook on the matching slice of the coarse residuals. Resets the
  /// rotation to identity first.
  void warm_start(const Matrix& items, const KMeansConfig& config, Rng& rng);
  /// Random-normal centroids with the given standard deviation; used to
  /// reproduce the cold-start failure mode.
  void cold_start(double stddev, Rng& rng);

  /// Re-fits both codebooks on items under the current rotation, starting
  /// Lloyd from the present centroids.
  void refit_codebooks(const Matrix& items, const KMeansConfig& config,
                       Rng& rng);

 private:
  Matrix rotated_rows(const Matrix& items) const;
  void fit_codebooks(const Matrix& rotated, const KMeansConfig& config,
                     Rng& rng, bool from_current);

  LayerShape shape_;
  bool rotation_enabled_ = true;
  RotationMatrix rotation_;
  Matrix coarse_;
  Matrix pq_;
  AdagradState coarse_opt_;
  AdagradState pq_opt_;
};

struct StraightThroughOutput {
  /// Forward value: exactly 𝒯(x).
  Vector forward;
  ItemCode code;
  double distortion = 0.0;
};

/// ℋ(x) = x − sg(x − 𝒯(x)): emits 𝒯(x) forward.
StraightThroughOutput straight_through(const QuantizerLayer& layer,
                                       std::span<const float> x);

/// Backward of ℋ: the gradient reaching x is the gradient at the emitted
/// value, unchanged.
void straight_through_backward(std::span<const float> grad_emitted,
                               std::span<float> grad_input);

}  // namespace jointpq
