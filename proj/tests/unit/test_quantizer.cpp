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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "jointpq/error.hpp"
#include "jointpq/quantizer.hpp"
#include "test_util.hpp"

namespace jointpq {
namespace {

using testing::random_layer;
using testing::random_matrix;
using testing::random_vector;

TEST(LayerShape, Validation) {
  EXPECT_NO_THROW((LayerShape{8, 4, 16, 2}.validate()));
  EXPECT_THROW((LayerShape{8, 4, 16, 3}.validate()), ParameterError);
  EXPECT_THROW((LayerShape{8, 4, 257, 2}.validate()), ParameterError);
  EXPECT_THROW((LayerShape{8, 0, 16, 2}.validate()), ParameterError);
  EXPECT_THROW((LayerShape{0, 4, 16, 1}.validate()), ParameterError);
  EXPECT_NO_THROW((LayerShape{8, 4, 256, 8}.validate()));
}

TEST(CoarseAssign, ExactCentroidAndZeroResidual) {
  Rng rng(1);
  QuantizerLayer layer = random_layer({6, 8, 4, 3}, rng);
  const auto v3 = layer.coarse().row(3);
  const Nearest n = layer.coarse_assign(v3);
  EXPECT_EQ(n.index, 3u);
  EXPECT_EQ(n.distance, 0.0);
}

TEST(CoarseAssign, TieGoesToLowestIndex) {
  QuantizerLayer layer({2, 4, 1, 1}, false);
  layer.coarse().row(0)[0] = 9;
  layer.coarse().row(1)[0] = 1;
  layer.coarse().row(2)[0] = -1;
  layer.coarse().row(3)[0] = 1;
  EXPECT_EQ(layer.coarse_assign(Vector{0, 0}).index, 1u);
}

TEST(CoarseAssign, MatchesLinearScan) {
  Rng rng(2);
  QuantizerLayer layer = random_layer({16, 32, 4, 4}, rng);
  for (int t = 0; t < 1000; ++t) {
    const Vector x = random_vector(16, rng);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < 32; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < 16; ++i) {
        const double diff = double(x[i]) - layer.coarse()(r, i);
        s += diff * diff;
      }
      if (s < best_d) best_d = s, best = r;
    }
    ASSERT_EQ(layer.coarse_assign(x).index, best);
  }
}

TEST(PqEncode, ZeroInputPicksZeroCentroids) {
  Rng rng(3);
  QuantizerLayer layer = random_layer({8, 2, 4, 4}, rng);
  // Put a zero centroid at a different slot in every sub-space.
  for (std::size_t j = 0; j < 4; ++j) {
    auto row = layer.pq().row(j * 4 + j);
    std::fill(row.begin(), row.end(), 0.0f);
  }
  const auto code = layer.pq_encode(Vector(8, 0.0f));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(code[j], j);
  ItemCode full{1, code};
  const Vector rec = layer.decode(full);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(rec[i], layer.coarse()(1, i));
}

// Brute force over all K^D combinations of the concatenated code.
std::vector<std::uint8_t> brute_force_pq(const QuantizerLayer& layer,
                                         std::span<const float> y) {
  const auto& s = layer.shape();
  const std::size_t w = s.sub_dim();
  std::vector<std::uint8_t> code(s.subspaces, 0), best;
  double best_d = std::numeric_limits<double>::infinity();
  while (true) {
    double total = 0.0;
    for (std::size_t j = 0; j < s.subspaces; ++j) {
      const auto c = layer.pq_centroid(j, code[j]);
      for (std::size_t t = 0; t < w; ++t) {
        const double diff = double(y[j * w + t]) - c[t];
        total += diff * diff;
      }
    }
    if (total < best_d) best_d = total, best = code;
    std::size_t pos = 0;
    while (pos < s.subspaces && ++code[pos] == s.pq_centroids) code[pos++] = 0;
    if (pos == s.subspaces) break;
  }
  return best;
}

TEST(PqEncode, HandBuiltTwoByTwo) {
  QuantizerLayer layer({4, 1, 2, 2}, false);
  const float book[4][2] = {{0, 0}, {1, 1}, {-1, 2}, {3, -3}};
  for (std::size_t r = 0; r < 4; ++r) std::copy(book[r], book[r] + 2, layer.pq().row(r).begin());
  const Vector y{0.9f, 0.8f, 2.5f, -2.0f};
  const auto code = layer.pq_encode(y);
  EXPECT_EQ(code, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(code, brute_force_pq(layer, y));
}

TEST(PqEncode, PerSubspaceArgminIsGloballyOptimal) {
  Rng rng(4);
  for (std::size_t k = 1; k <= 4; ++k) {
    for (std::size_t d_sub = 1; d_sub <= 3; ++d_sub) {
      QuantizerLayer layer = random_layer({d_sub * 2, 1, k, d_sub}, rng);
      for (int t = 0; t < 30; ++t) {
        const Vector y = random_vector(d_sub * 2, rng);
        ASSERT_EQ(layer.pq_encode(y), brute_force_pq(layer, y));
      }
    }
  }
}

TEST(PqEncode, PermutingCentroidsPermutesCodes) {
  Rng rng(5);
  QuantizerLayer layer = random_layer({6, 1, 5, 3}, rng);
  QuantizerLayer permuted = layer;
  const std::size_t perm[5] = {3, 0, 4, 1, 2};  // new slot of old centroid k
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 0; k < 5; ++k) {
      const auto src = layer.pq_centroid(j, k);
      std::copy(src.begin(), src.end(), permuted.pq().row(j * 5 + perm[k]).begin());
    }
  }
  for (int t = 0; t < 50; ++t) {
    const Vector y = random_vector(6, rng);
    const auto a = layer.pq_encode(y), b = permuted.pq_encode(y);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(b[j], perm[a[j]]);
    EXPECT_EQ(layer.decode({0, a}), permuted.decode({0, b}));
  }
}

TEST(PqEncode, DimensionMismatchThrows) {
  QuantizerLayer layer({4, 1, 2, 2}, false);
  EXPECT_THROW(layer.pq_encode(Vector{1, 2, 3}), DimensionError);
  EXPECT_THROW(layer.coarse_assign(Vector{1, 2, 3}), DimensionError);
  EXPECT_THROW(layer.full_quantize(Vector{1, 2}), DimensionError);
}

TEST(Decode, ZeroCodebooksGiveZero) {
  QuantizerLayer layer({6, 3, 4, 2}, false);
  const Vector rec = layer.decode({2, {3, 1}});
  EXPECT_EQ(rec, Vector(6, 0.0f));
}

TEST(Decode, OutOfRangeCodesAreCorruption) {
  QuantizerLayer layer({6, 3, 4, 2}, false);
  EXPECT_THROW(layer.decode({3, {0, 0}}), CorruptionError);
  EXPECT_THROW(layer.decode({0, {4, 0}}), CorruptionError);
  EXPECT_THROW(layer.decode({0, {0}}), CorruptionError);
}

TEST(Decode, EncodeDecodeIsClosestInItsCell) {
  Rng rng(6);
  QuantizerLayer layer = random_layer({6, 5, 3, 3}, rng);
  for (int t = 0; t < 100; ++t) {
    const Vector xr = random_vector(6, rng);
    const ItemCode code = layer.encode_rotated(xr);
    const double got = l2_sq(layer.decode(code), xr);
    std::vector<std::uint8_t> c(3, 0);
    double best = std::numeric_limits<double>::infinity();
    for (int combo = 0; combo < 27; ++combo) {
      c = {std::uint8_t(combo % 3), std::uint8_t(combo / 3 % 3), std::uint8_t(combo / 9)};
      best = std::min(best, l2_sq(layer.decode({code.coarse, c}), xr));
    }
    EXPECT_NEAR(got, best, 1e-6 * (1 + best));
  }
}

TEST(FullQuantize, RepresentableInputIsFixed) {
  Rng rng(7);
  QuantizerLayer layer = random_layer({8, 4, 4, 2}, rng);
  // A vector whose rotated form is exactly centroid 2 + zero PQ slices.
  for (std::size_t j = 0; j < 2; ++j) {
    auto row = layer.pq().row(j * 4 + 1);
    std::fill(row.begin(), row.end(), 0.0f);
  }
  const Vector rec = layer.decode({2, {1, 1}});
  const Quantized q = layer.full_quantize(rec);
  EXPECT_EQ(q.code.coarse, 2u);
  EXPECT_EQ(q.value, rec);
  EXPECT_EQ(q.distortion, 0.0);
}

TEST(FullQuantize, SingleZeroCoarseCentroidIsPlainPq) {
  Rng rng(8);
  QuantizerLayer layer = random_layer({8, 1, 16, 4}, rng);
  std::fill(layer.coarse().values().begin(), layer.coarse().values().end(), 0.0f);
  for (int t = 0; t < 20; ++t) {
    const Vector x = random_vector(8, rng);
    const Quantized q = layer.full_quantize(x);
    EXPECT_EQ(q.code.pq, layer.pq_encode(x));
    EXPECT_EQ(q.value, layer.decode(q.code));
  }
}

TEST(FullQuantize, RotatedSpaceDistortionMatches) {
  Rng rng(9);
  QuantizerLayer layer = random_layer({12, 6, 8, 3}, rng, 200);
  for (int t = 0; t < 100; ++t) {
    const Vector x = random_vector(12, rng);
    const Quantized q = layer.full_quantize(x);
    const double direct = l2_sq(q.value, x);
    const double rotated = l2_sq(layer.decode(q.code), layer.rotation().rotate(x));
    EXPECT_NEAR(std::sqrt(direct), std::sqrt(rotated), 1e-5);
    EXPECT_NEAR(q.distortion, rotated, 1e-9);
  }
}

TEST(FullQuantize, DeterministicCodes) {
  Rng rng(10);
  QuantizerLayer layer = random_layer({8, 4, 4, 2}, rng, 20);
  const Vector x = random_vector(8, rng);
  EXPECT_EQ(layer.full_quantize(x).code, layer.full_quantize(x).code);
  QuantizerLayer copy = layer;
  EXPECT_EQ(copy.full_quantize(x).value, layer.full_quantize(x).value);
}

TEST(FullQuantize, ZeroVectorIsQuantizedNormally) {
  Rng rng(11);
  QuantizerLayer layer = random_layer({4, 2, 2, 2}, rng);
  const Quantized q = layer.full_quantize(Vector(4, 0.0f));
  EXPECT_TRUE(all_finite(q.value));
}

TEST(StraightThrough, ForwardIsExactQuantizationBackwardIsCopy) {
  Rng rng(12);
  QuantizerLayer layer = random_layer({8, 4, 4, 4}, rng, 30);
  const Vector x = random_vector(8, rng);
  const StraightThroughOutput st = straight_through(layer, x);
  EXPECT_EQ(st.forward, layer.full_quantize(x).value);
  const Vector g = random_vector(8, rng);
  Vector gx(8);
  straight_through_backward(g, gx);
  EXPECT_EQ(std::memcmp(g.data(), gx.data(), 8 * sizeof(float)), 0);
  Vector wrong(7);
  EXPECT_THROW(straight_through_backward(g, wrong), DimensionError);
}

TEST(RegLoss, RepresentableInputHasNoLossOrGradient) {
  QuantizerLayer layer({4, 2, 2, 2}, false);
  layer.coarse()(1, 0) = 1.0f;
  layer.coarse()(1, 3) = -2.0f;
  CentroidGradients g = layer.zero_gradients();
  const double loss = layer.reg_loss_and_grads(Vector{1, 0, 0, -2}, 1.0, g);
  EXPECT_EQ(loss, 0.0);
  for (float v : g.coarse.values()) EXPECT_EQ(v, 0.0f);
  for (float v : g.pq.values()) EXPECT_EQ(v, 0.0f);
}

TEST(RegLoss, FixedPointIsTheMemberMean) {
  // J=1 at the origin, K=1: descent on the PQ centroids converges to the
  // mean of the batch slices.
  QuantizerLayer layer({4, 1, 1, 2}, false, AdagradConfig{0.05, 1e-8});
  const float pts[4][4] = {{1, 2, 3, 4}, {-1, 0, 2, 2}, {0.5f, 1, -1, 0}, {2, -3, 0, 1}};
  for (int it = 0; it < 3000; ++it) {
    CentroidGradients g = layer.zero_gradients();
    for (const auto& p : pts) layer.reg_loss_and_grads(std::span<const float>(p, 4), 0.25, g);
    // Coarse centroid stays at zero so only the PQ level moves.
    std::fill(g.coarse.values().begin(), g.coarse.values().end(), 0.0f);
    layer.apply_gradients(g);
  }
  const float mean[4] = {0.625f, 0.0f, 1.0f, 1.75f};
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t t = 0; t < 2; ++t) {
      EXPECT_NEAR(layer.pq_centroid(j, 0)[t], mean[j * 2 + t], 1e-3);
    }
  }
  // And the gradient at the mean is zero by construction.
  QuantizerLayer at_mean({4, 1, 1, 2}, false);
  std::copy(mean, mean + 4, at_mean.pq().values().begin());
  CentroidGradients g = at_mean.zero_gradients();
  for (const auto& p : pts) at_mean.reg_loss_and_grads(std::span<const float>(p, 4), 0.25, g);
  for (float v : g.pq.values()) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(RegLoss, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  QuantizerLayer layer = random_layer({6, 3, 3, 3}, rng, 10);
  const Matrix batch = random_matrix(5, 6, rng);
  std::vector<ItemCode> frozen;
  for (std::size_t r = 0; r < 5; ++r) frozen.push_back(layer.full_quantize(batch.row(r)).code);
  auto loss_at = [&](const QuantizerLayer& l) {
    double total = 0.0;
    for (std::size_t r = 0; r < 5; ++r) {
      total += l2_sq(l.decode(frozen[r]), l.rotation().rotate(batch.row(r)));
    }
    return total;
  };
  CentroidGradients g = layer.zero_gradients();
  for (std::size_t r = 0; r < 5; ++r) layer.reg_loss_and_grads(batch.row(r), 1.0, g);
  const double h = 1e-3;
  auto check = [&](Matrix& param, const Matrix& grad) {
    for (std::size_t i = 0; i < param.values().size(); ++i) {
      const float saved = param.values()[i];
      param.values()[i] = saved + static_cast<float>(h);
      const double up = loss_at(layer);
      param.values()[i] = saved - static_cast<float>(h);
      const double down = loss_at(layer);
      param.values()[i] = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(grad.values()[i], fd, 1e-2 * std::max(1.0, std::abs(fd)));
    }
  };
  check(layer.coarse(), g.coarse);
  check(layer.pq(), g.pq);
}

TEST(RegLoss, RotatedFormEqualsOriginalSpaceDistortion) {
  Rng rng(14);
  QuantizerLayer layer = random_layer({8, 4, 4, 2}, rng, 50);
  for (int t = 0; t < 50; ++t) {
    const Vector x = random_vector(8, rng);
    CentroidGradients g = layer.zero_gradients();
    const double loss = layer.reg_loss_and_grads(x, 1.0, g);
    EXPECT_NEAR(loss, l2_sq(layer.full_quantize(x).value, x), 1e-5);
  }
}

Matrix blob_items(std::size_t blobs, std::size_t per_blob, std::size_t d, Rng& rng,
                  double spread = 0.05) {
  Matrix centres = random_matrix(blobs, d, rng, 10.0);
  Matrix items(blobs * per_blob, d);
  for (std::size_t i = 0; i < items.rows(); ++i) {
    for (std::size_t t = 0; t < d; ++t) {
      items(i, t) = centres(i % blobs, t) + static_cast<float>(spread * rng.normal());
    }
  }
  return items;
}

std::size_t used_cells(const QuantizerLayer& layer, const Matrix& items) {
  std::set<std::uint32_t> used;
  for (std::size_t i = 0; i < items.rows(); ++i) {
    used.insert(layer.full_quantize(items.row(i)).code.coarse);
  }
  return used.size();
}

TEST(WarmStart, CapturesEveryBlob) {
  Rng rng(15);
  const Matrix items = blob_items(8, 40, 8, rng);
  QuantizerLayer layer({8, 8, 4, 2}, true);
  layer.rotation().append({0, 1, 0.3});
  layer.warm_start(items, KMeansConfig{}, rng);
  EXPECT_TRUE(layer.rotation().is_identity());
  EXPECT_EQ(used_cells(layer, items), 8u);
  // One cell per blob.
  for (std::size_t i = 8; i < items.rows(); ++i) {
    EXPECT_EQ(layer.full_quantize(items.row(i)).code.coarse,
              layer.full_quantize(items.row(i % 8)).code.coarse);
  }
}

TEST(WarmStart, SingleItem) {
  Rng rng(16);
  const Matrix items = random_matrix(1, 4, rng);
  QuantizerLayer layer({4, 1, 1, 2}, true);
  layer.warm_start(items, KMeansConfig{}, rng);
  EXPECT_EQ(layer.coarse(), items);
  for (float v : layer.pq().values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(layer.full_quantize(items.row(0)).distortion, 0.0);
}

TEST(WarmStart, TooFewItemsIsAParameterError) {
  Rng rng(17);
  QuantizerLayer layer({4, 8, 2, 2}, true);
  EXPECT_THROW(layer.warm_start(random_matrix(5, 4, rng), KMeansConfig{}, rng),
               ParameterError);
  QuantizerLayer wide_k({4, 2, 16, 2}, true);
  EXPECT_THROW(wide_k.warm_start(random_matrix(10, 4, rng), KMeansConfig{}, rng),
               ParameterError);
  EXPECT_THROW(layer.warm_start(random_matrix(20, 3, rng), KMeansConfig{}, rng),
               DimensionError);
}

TEST(WarmStart, BeatsColdStartOnBlobs) {
  Rng rng(18);
  const Matrix items = blob_items(32, 20, 16, rng, 0.5);
  // Shrink to embedding-like scale so unit-variance random centroids are far.
  Matrix small = items;
  for (float& v : small.values()) v *= 0.01f;
  QuantizerLayer warm({16, 32, 8, 4}, true), cold({16, 32, 8, 4}, true);
  Rng a(1), b(1);
  warm.warm_start(small, KMeansConfig{}, a);
  cold.cold_start(1.0, b);
  EXPECT_GT(used_cells(warm, small), used_cells(cold, small));
  double dw = 0.0, dc = 0.0;
  for (std::size_t i = 0; i < small.rows(); ++i) {
    dw += warm.full_quantize(small.row(i)).distortion;
    dc += cold.full_quantize(small.row(i)).distortion;
  }
  EXPECT_LT(dw, dc);
}

TEST(FromParts, ChecksShapes) {
  const LayerShape s{4, 2, 2, 2};
  EXPECT_NO_THROW(QuantizerLayer::from_parts(s, true, RotationMatrix(4), Matrix(2, 4),
                                             Matrix(4, 2)));
  EXPECT_THROW(QuantizerLayer::from_parts(s, true, RotationMatrix(4), Matrix(3, 4),
                                          Matrix(4, 2)),
               DimensionError);
  EXPECT_THROW(QuantizerLayer::from_parts(s, true, RotationMatrix(3), Matrix(2, 4),
                                          Matrix(4, 2)),
               DimensionError);
}

}  // namespace
}  // namespace jointpq
