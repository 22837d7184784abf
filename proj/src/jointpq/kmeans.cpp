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

#include "jointpq/kmeans.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

namespace jointpq {

namespace {

std::atomic<std::uint64_t> g_invocations{0};

Matrix gather_rows(const Matrix& points, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), points.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto src = points.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// k-means++ with `trials` sampled candidates per step; the candidate that
/// lowers the total potential most is kept (trials == 1 is plain k-means++).
Matrix plus_plus_seed(const Matrix& points, std::size_t k, std::size_t trials,
                      Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Matrix centroids(k, d);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<double> trial_dist(n), best_dist(n);

  auto sample = [&](double total) {
    double target = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= min_dist[i];
      if (target < 0.0 && min_dist[i] > 0.0) {
        pick = i;
        break;
      }
    }
    // Rounding can leave `target` marginally positive; fall back to the last
    // point that still has mass.
    while (min_dist[pick] <= 0.0 && pick > 0) --pick;
    return pick;
  };

  std::size_t pick = rng.below(n);
  for (std::size_t i = 0; i < n; ++i) {
    min_dist[i] = l2_sq_unchecked(points.row(i).data(),
                                  points.row(pick).data(), d);
  }
  std::copy(points.row(pick).begin(), points.row(pick).end(),
            centroids.row(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : min_dist) total += v;
    if (total <= 0.0) {
      pick = rng.below(n);
      best_dist = min_dist;
    } else {
      double best_total = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t cand = sample(total);
        double cand_total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          trial_dist[i] = std::min(
              min_dist[i], l2_sq_unchecked(points.row(i).data(),
                                           points.row(cand).data(), d));
          cand_total += trial_dist[i];
        }
        if (cand_total < best_total) {
          best_total = cand_total;
          pick = cand;
          best_dist.swap(trial_dist);
        }
      }
    }
    min_dist.swap(best_dist);
    std::copy(points.row(pick).begin(), points.row(pick).end(),
              centroids.row(c).begin());
  }
  return centroids;
}

/// Assigns every point and returns the mean distortion. `dist` receives the
/// per-point squared distance.
double assign(const Matrix& points, const Matrix& centroids,
              std::vector<std::uint32_t>& assignments,
              std::vector<double>& dist) {
  const std::size_t n = points.rows();
  assignments.resize(n);
  dist.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Nearest nn = nearest_centroid(points.row(i), centroids);
    assignments[i] = nn.index;
    dist[i] = nn.distance;
    total += nn.distance;
  }
  return total / static_cast<double>(n);
}

void update_centroids(const Matrix& points,
                      const std::vector<std::uint32_t>& assignments,
                      std::vector<double>& dist, Matrix& centroids) {
  const std::size_t k = centroids.rows();
  const std::size_t d = centroids.cols();
  std::vector<double> sums(k * d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const std::uint32_t c = assignments[i];
    ++counts[c];
    auto p = points.row(i);
    double* s = sums.data() + static_cast<std::size_t>(c) * d;
    for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(counts[c]);
    auto row = centroids.row(c);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = static_cast<float>(sums[c * d + j] * inv);
    }
  }
  if (std::find(counts.begin(), counts.end(), 0) == counts.end()) return;
  // Distances to the moved centroids; each re-seed then shrinks them so the
  // next empty cluster lands somewhere else.
  for (std::size_t i = 0; i < points.rows(); ++i) {
    dist[i] = l2_sq_unchecked(points.row(i).data(),
                              centroids.row(assignments[i]).data(), d);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = 0;
    for (std::size_t i = 1; i < dist.size(); ++i) {
      if (dist[i] > dist[far]) far = i;
    }
    auto src = points.row(far);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < points.rows(); ++i) {
      dist[i] = std::min(dist[i], l2_sq_unchecked(points.row(i).data(),
                                                  src.data(), d));
    }
  }
}

}  // namespace

Nearest nearest_centroid(std::span<const float> x, const Matrix& centroids) {
  if (centroids.rows() == 0) {
    throw ParameterError("nearest_centroid: no centroids");
  }
  check_same_dim(x.size(), centroids.cols(), "nearest_centroid");
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < centroids.rows(); ++k) {
    const double dist =
        l2_sq_unchecked(x.data(), centroids.row(k).data(), x.size());
    if (dist < best.distance) {
      best.index = static_cast<std::uint32_t>(k);
      best.distance = dist;
    }
  }
  return best;
}

KMeansResult kmeans_fit(const Matrix& points, std::size_t k,
                        const KMeansConfig& config, Rng& rng,
                        const Matrix* init) {
  ++g_invocations;
  const std::size_t n = points.rows();
  if (n == 0) throw ParameterError("kmeans_fit: no points");
  if (k == 0) throw ParameterError("kmeans_fit: k must be positive");
  if (k > n) {
    throw ParameterError("kmeans_fit: k=" + std::to_string(k) +
                         " exceeds point count " + std::to_string(n));
  }
  if (config.iterations == 0) {
    throw ParameterError("kmeans_fit: zero iterations");
  }
  if (init != nullptr &&
      (init->rows() != k || init->cols() != points.cols())) {
    throw DimensionError("kmeans_fit: initial centroids have the wrong shape");
  }

  // Optional training subsample; the subset is drawn before seeding so the
  // stream layout does not depend on whether sampling kicks in.
  const Matrix* train = &points;
  Matrix sample;
  if (config.max_points_per_centroid > 0 &&
      n > k * config.max_points_per_centroid) {
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    rng.shuffle(ids);
    ids.resize(k * config.max_points_per_centroid);
    std::sort(ids.begin(), ids.end());
    sample = gather_rows(points, ids);
    train = &sample;
  }

  std::size_t trials = config.seed_trials;
  if (trials == 0) {
    trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  }
  const std::size_t runs =
      init != nullptr ? 1 : std::max<std::size_t>(1, config.restarts);

  KMeansResult result;
  std::vector<std::uint32_t> assignments;
  std::vector<double> dist;
  double current = 0.0;
  for (std::size_t run = 0; run < runs; ++run) {
    KMeansResult attempt;
    attempt.centroids =
        init != nullptr ? *init : plus_plus_seed(*train, k, trials, rng);
    std::vector<std::uint32_t> attempt_assign;
    double value = assign(*train, attempt.centroids, attempt_assign, dist);
    attempt.history.push_back(value);
    for (std::size_t it = 0; it < config.iterations; ++it) {
      update_centroids(*train, attempt_assign, dist, attempt.centroids);
      const double next =
          assign(*train, attempt.centroids, attempt_assign, dist);
      attempt.history.push_back(next);
      const bool converged = value - next <= config.tolerance * value;
      value = next;
      if (converged) break;
    }
    if (run == 0 || value < current) {
      current = value;
      result = std::move(attempt);
      assignments = std::move(attempt_assign);
    }
  }

  if (train == &points) {
    result.assignments = std::move(assignments);
    result.distortion = current;
  } else {
    result.distortion =
        assign(points, result.centroids, result.assignments, dist);
  }
  return result;
}

std::uint64_t kmeans_invocations() noexcept { return g_invocations.load(); }

}  // namespace jointpq
