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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jointpq/quantizer.hpp"

namespace jointpq {

inline constexpr std::uint32_t kIndexVersion = 1;

struct SearchParams {
  std::size_t k = 10;
  std::size_t nprobe = 1;
};

struct SearchHit {
  std::uint32_t item = 0;
  double score = 0.0;
  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// IVF-PQ serving index: rotation, codebooks, one (coarse, PQ) code per item,
/// and the item id vocabulary. Immutable once built or loaded.
///
/// File layout, little-endian throughout:
///   "POEM" | u32 version | u32 d, D, K, J, n_items
///   | rotation d×d f32 row-major | coarse J×d f32 | PQ D×K×(d/D) f32
///   | per item: u32 coarse code, D × u8 PQ code
///   | per item: u16 length + UTF-8 id bytes
/// Inverted lists are rebuilt from the item section on load.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  EmbeddingIndex(const LayerShape& shape, std::vector<float> rotation,
                 Matrix coarse, Matrix pq, std::vector<std::uint32_t> coarse_codes,
                 std::vector<std::uint8_t> pq_codes, std::vector<std::string> ids);

  const LayerShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::span<const float> rotation() const noexcept { return rotation_; }
  const Matrix& coarse() const noexcept { return coarse_; }
  const Matrix& pq() const noexcept { return pq_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<std::vector<std::uint32_t>>& lists() const noexcept {
    return lists_;
  }
  ItemCode code(std::uint32_t item) const;
  /// 𝒯(s) = Rᵀ ρ(code) in the original space, from the stored data.
  Vector reconstruct(std::uint32_t item) const;

  /// Top-k by q̂ᵀ𝒯(s) over the nprobe cells whose centroids score highest
  /// against R·q̂. Ties go to the lower item ordinal; k larger than the
  /// candidate set returns every candidate.
  std::vector<SearchHit> search(std::span<const float> query,
                                const SearchParams& params) const;

  std::vector<std::uint8_t> serialize() const;
  static EmbeddingIndex deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b);

 private:
  LayerShape shape_;
  std::vector<float> rotation_;
  Matrix coarse_;
  Matrix pq_;
  std::vector<std::uint32_t> coarse_codes_;
  std::vector<std::uint8_t> pq_codes_;
  std::vector<std::string> ids_;
  std::vector<std::vector<std::uint32_t>> lists_;
};

/// Encode-only build: every item goes through the trained layer and lands in
/// the inverted list of its coarse code. No clustering happens here.
EmbeddingIndex build_index(const Matrix& items,
                           const std::vector<std::string>& ids,
                           const QuantizerLayer& layer);

struct OfflineBuildConfig {
  LayerShape shape{64, 256, 16, 8};
  bool use_rotation = true;
  /// Alternations of rotation sweeps and re-clustering.
  std::size_t rounds = 4;
  /// Steepest updates per sweep; zero means d.
  std::size_t sweep_updates = 0;
  /// Items used for the rotation sweeps.
  std::size_t sweep_sample = 4096;
  KMeansConfig kmeans;
  RotationUpdateConfig rotation;
};

/// Baseline: k-means codebooks learned after the fact on frozen embeddings,
/// optionally alternated with rotation sweeps, then the same encode step.
EmbeddingIndex offline_build(const Matrix& items,
                             const std::vector<std::string>& ids,
                             const OfflineBuildConfig& config, Rng& rng);

/// Layer that offline_build would encode with; exposed for inspection.
QuantizerLayer offline_layer(const Matrix& items,
                             const OfflineBuildConfig& config, Rng& rng);

}  // namespace jointpq
