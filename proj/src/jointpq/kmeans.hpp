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
#include <optional>
#include <span>
#include <vector>

#include "jointpq/numeric.hpp"

namespace jointpq {

struct KMeansConfig {
  std::size_t iterations = 20;
  /// Stop once the relative distortion improvement falls below this.
  double tolerance = 1e-4;
  /// Lloyd runs on at most k * max_points_per_centroid sampled points; the
  /// final assignment always covers every point. Zero disables sampling.
  std::size_t max_points_per_centroid = 256;
  /// Candidates tried per k-means++ seeding step; 0 means 2 + ln(k).
  std::size_t seed_trials = 0;
  /// Independent seed-and-Lloyd runs; the lowest distortion wins. Ignored
  /// when initial centroids are supplied.
  std::size_t restarts = 3;
};

struct KMeansResult {
  Matrix centroids;
  std::vector<std::uint32_t> assignments;
  /// Mean squared L2 distance of the points to their assigned centroid.
  double distortion = 0.0;
  /// Distortion after every assignment pass of the winning run, seeding
  /// pass included.
  std::vector<double> history;
};

struct Nearest {
  std::uint32_t index = 0;
  double distance = 0.0;
};

/// Argmin of squared L2 distance; ties go to the lowest index.
Nearest nearest_centroid(std::span<const float> x, const Matrix& centroids);

/// Lloyd's algorithm from greedy k-means++ seeding, or from `init` when given.
/// Empty clusters are moved onto the point farthest from its centroid.
KMeansResult kmeans_fit(const Matrix& points, std::size_t k,
                        const KMeansConfig& config, Rng& rng,
                        const Matrix* init = nullptr);

/// Number of kmeans_fit calls made by this process.
std::uint64_t kmeans_invocations() noexcept;

}  // namespace jointpq
