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

#include "jointpq/quantizer.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace jointpq {

void LayerShape::validate() const {
  if (dim == 0 || coarse == 0 || pq_centroids == 0 || subspaces == 0) {
    throw ParameterError("layer shape: d, J, K and D must all be positive");
  }
  if (dim % subspaces != 0) {
    throw ParameterError("layer shape: d=" + std::to_string(dim) +
                         " is not divisible by D=" + std::to_string(subspaces));
  }
  if (pq_centroids > 256) {
    throw ParameterError("layer shape: K=" + std::to_string(pq_centroids) +
                         " exceeds 256");
  }
  if (coarse > std::numeric_limits<std::uint32_t>::max()) {
    throw ParameterError("layer shape: J does not fit 32 bits");
  }
}

QuantizerLayer::QuantizerLayer(const LayerShape& shape, bool rotation_enabled,
                               AdagradConfig optimizer)
    : shape_(shape), rotation_enabled_(rotation_enabled) {
  shape_.validate();
  rotation_ = RotationMatrix(shape_.dim);
  coarse_ = Matrix(shape_.coarse, shape_.dim);
  pq_ = Matrix(shape_.subspaces * shape_.pq_centroids, shape_.sub_dim());
  coarse_opt_ = AdagradState(coarse_.values().size(), optimizer);
  pq_opt_ = AdagradState(pq_.values().size(), optimizer);
}

QuantizerLayer QuantizerLayer::from_parts(const LayerShape& shape,
                                          bool rotation_enabled,
                                          RotationMatrix rotation, Matrix coarse,
                                          Matrix pq, AdagradConfig optimizer) {
  QuantizerLayer layer(shape, rotation_enabled, optimizer);
  if (rotation.dim() != shape.dim || coarse.rows() != layer.coarse_.rows() ||
      coarse.cols() != layer.coarse_.cols() || pq.rows() != layer.pq_.rows() ||
      pq.cols() != layer.pq_.cols()) {
    throw DimensionError("layer parts do not match the layer shape");
  }
  layer.rotation_ = std::move(rotation);
  layer.coarse_ = std::move(coarse);
  layer.pq_ = std::move(pq);
  return layer;
}

Nearest QuantizerLayer::coarse_assign(std::span<const float> xr) const {
  check_same_dim(xr.size(), shape_.dim, "coarse_assign");
  return nearest_centroid(xr, coarse_);
}

void QuantizerLayer::pq_encode_into(std::span<const float> residual,
                                    std::span<std::uint8_t> out) const {
  check_same_dim(residual.size(), shape_.dim, "pq_encode");
  check_same_dim(out.size(), shape_.subspaces, "pq_encode output");
  const std::size_t sub = shape_.sub_dim();
  const std::size_t k_count = shape_.pq_centroids;
  for (std::size_t j = 0; j < shape_.subspaces; ++j) {
    const float* y = residual.data() + j * sub;
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      const double dist =
          l2_sq_unchecked(y, pq_.row(j * k_count + k).data(), sub);
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    out[j] = static_cast<std::uint8_t>(best);
  }
}

std::vector<std::uint8_t> QuantizerLayer::pq_encode(
    std::span<const float> residual) const {
  std::vector<std::uint8_t> out(shape_.subspaces);
  pq_encode_into(residual, out);
  return out;
}

void QuantizerLayer::decode_into(const ItemCode& code,
                                 std::span<float> out) const {
  check_same_dim(out.size(), shape_.dim, "decode output");
  if (code.coarse >= shape_.coarse) {
    throw CorruptionError("coarse code " + std::to_string(code.coarse) +
                              " out of range",
                          0);
  }
  if (code.pq.size() != shape_.subspaces) {
    throw CorruptionError("PQ code has the wrong width", 0);
  }
  const std::size_t sub = shape_.sub_dim();
  auto base = coarse_.row(code.coarse);
  for (std::size_t j = 0; j < shape_.subspaces; ++j) {
    if (code.pq[j] >= shape_.pq_centroids) {
      throw CorruptionError("PQ code " + std::to_string(code.pq[j]) +
                                " out of range",
                            0);
    }
    auto centroid = pq_centroid(j, code.pq[j]);
    for (std::size_t t = 0; t < sub; ++t) {
      out[j * sub + t] = base[j * sub + t] + centroid[t];
    }
  }
}

Vector QuantizerLayer::decode(const ItemCode& code) const {
  Vector out(shape_.dim);
  decode_into(code, out);
  return out;
}

ItemCode QuantizerLayer::encode_rotated(std::span<const float> xr) const {
  ItemCode code;
  code.coarse = coarse_assign(xr).index;
  Vector residual(shape_.dim);
  auto centroid = coarse_.row(code.coarse);
  for (std::size_t t = 0; t < shape_.dim; ++t) residual[t] = xr[t] - centroid[t];
  code.pq = pq_encode(residual);
  return code;
}

Quantized QuantizerLayer::full_quantize(std::span<const float> x) const {
  check_same_dim(x.size(), shape_.dim, "full_quantize");
  Quantized q;
  q.rotated = rotation_.rotate(x);
  q.code = encode_rotated(q.rotated);
  q.reconstruction = decode(q.code);
  q.value = rotation_.rotate_back(q.reconstruction);
  q.distortion = l2_sq_unchecked(q.reconstruction.data(), q.rotated.data(),
                                 shape_.dim);
  return q;
}

CentroidGradients QuantizerLayer::zero_gradients() const {
  return {Matrix(coarse_.rows(), coarse_.cols()),
          Matrix(pq_.rows(), pq_.cols())};
}

double QuantizerLayer::reg_loss_and_grads(std::span<const float> x,
                                          double scale,
                                          CentroidGradients& grads) const {
  return accumulate_reg_grads(full_quantize(x), scale, grads);
}

double QuantizerLayer::accumulate_reg_grads(const Quantized& q, double scale,
                                            CentroidGradients& grads) const {
  const std::size_t sub = shape_.sub_dim();
  auto coarse_grad = grads.coarse.row(q.code.coarse);
  for (std::size_t t = 0; t < shape_.dim; ++t) {
    const double g = 2.0 * (static_cast<double>(q.reconstruction[t]) -
                            q.rotated[t]) * scale;
    coarse_grad[t] += static_cast<float>(g);
    const std::size_t j = t / sub;
    grads.pq(j * shape_.pq_centroids + q.code.pq[j], t % sub) +=
        static_cast<float>(g);
  }
  return q.distortion;
}

void QuantizerLayer::apply_gradients(const CentroidGradients& grads) {
  coarse_opt_.step(coarse_.values(), grads.coarse.values(), 0);
  pq_opt_.step(pq_.values(), grads.pq.values(), 0);
}

Matrix QuantizerLayer::rotated_rows(const Matrix& items) const {
  check_same_dim(items.cols(), shape_.dim, "quantizer items");
  Matrix out(items.rows(), items.cols());
  for (std::size_t i = 0; i < items.rows(); ++i) {
    rotation_.rotate_into(items.row(i), out.row(i));
  }
  return out;
}

void QuantizerLayer::fit_codebooks(const Matrix& rotated,
                                   const KMeansConfig& config, Rng& rng,
                                   bool from_current) {
  const std::size_t n = rotated.rows();
  const std::size_t sub = shape_.sub_dim();
  const std::size_t k_count = shape_.pq_centroids;

  KMeansResult coarse =
      kmeans_fit(rotated, shape_.coarse, config, rng,
                 from_current ? &coarse_ : nullptr);
  coarse_ = std::move(coarse.centroids);

  Matrix residual_slice(n, sub);
  for (std::size_t j = 0; j < shape_.subspaces; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      auto x = rotated.row(i);
      auto v = coarse_.row(coarse.assignments[i]);
      auto out = residual_slice.row(i);
      for (std::size_t t = 0; t < sub; ++t) {
        out[t] = x[j * sub + t] - v[j * sub + t];
      }
    }
    Matrix init;
    if (from_current) {
      init = Matrix(k_count, sub);
      for (std::size_t k = 0; k < k_count; ++k) {
        auto src = pq_centroid(j, k);
        std::copy(src.begin(), src.end(), init.row(k).begin());
      }
    }
    KMeansResult pq = kmeans_fit(residual_slice, k_count, config, rng,
                                 from_current ? &init : nullptr);
    for (std::size_t k = 0; k < k_count; ++k) {
      auto src = pq.centroids.row(k);
      std::copy(src.begin(), src.end(), pq_.row(j * k_count + k).begin());
    }
  }
}

void QuantizerLayer::warm_start(const Matrix& items, const KMeansConfig& config,
                                Rng& rng) {
  if (items.rows() == 0) throw ParameterError("warm start: no items");
  if (items.rows() < shape_.coarse || items.rows() < shape_.pq_centroids) {
    throw ParameterError("warm start: " + std::to_string(items.rows()) +
                         " items cannot seed J=" +
                         std::to_string(shape_.coarse) +
                         " / K=" + std::to_string(shape_.pq_centroids));
  }
  rotation_ = RotationMatrix(shape_.dim);
  fit_codebooks(rotated_rows(items), config, rng, /*from_current=*/false);
}

void QuantizerLayer::refit_codebooks(const Matrix& items,
                                     const KMeansConfig& config, Rng& rng) {
  fit_codebooks(rotated_rows(items), config, rng, /*from_current=*/true);
}

void QuantizerLayer::cold_start(double stddev, Rng& rng) {
  for (float& v : coarse_.values()) v = static_cast<float>(stddev * rng.normal());
  for (float& v : pq_.values()) v = static_cast<float>(stddev * rng.normal());
  rotation_ = RotationMatrix(shape_.dim);
}

StraightThroughOutput straight_through(const QuantizerLayer& layer,
                                       std::span<const float> x) {
  Quantized q = layer.full_quantize(x);
  return {std::move(q.value), std::move(q.code), q.distortion};
}

void straight_through_backward(std::span<const float> grad_emitted,
                               std::span<float> grad_input) {
  check_same_dim(grad_emitted.size(), grad_input.size(),
                 "straight_through_backward");
  std::copy(grad_emitted.begin(), grad_emitted.end(), grad_input.begin());
}

}  // namespace jointpq
