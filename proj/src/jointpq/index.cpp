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

#include "jointpq/index.hpp"

#include "jointpq/bytes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace jointpq {

namespace {

constexpr char kMagic[4] = {'P', 'O', 'E', 'M'};

struct Candidate {
  double score;
  std::uint32_t item;
};

// Orders the heap so the weakest candidate sits on top: lower score, or equal
// score and higher ordinal.
bool better(const Candidate& a, const Candidate& b) {
  return a.score > b.score || (a.score == b.score && a.item < b.item);
}

}  // namespace

EmbeddingIndex::EmbeddingIndex(const LayerShape& shape,
                               std::vector<float> rotation, Matrix coarse,
                               Matrix pq,
                               std::vector<std::uint32_t> coarse_codes,
                               std::vector<std::uint8_t> pq_codes,
                               std::vector<std::string> ids)
    : shape_(shape),
      rotation_(std::move(rotation)),
      coarse_(std::move(coarse)),
      pq_(std::move(pq)),
      coarse_codes_(std::move(coarse_codes)),
      pq_codes_(std::move(pq_codes)),
      ids_(std::move(ids)) {
  shape_.validate();
  const std::size_t n = ids_.size();
  if (rotation_.size() != shape_.dim * shape_.dim ||
      coarse_.rows() != shape_.coarse || coarse_.cols() != shape_.dim ||
      pq_.rows() != shape_.subspaces * shape_.pq_centroids ||
      pq_.cols() != shape_.sub_dim() || coarse_codes_.size() != n ||
      pq_codes_.size() != n * shape_.subspaces) {
    throw DimensionError("index payload does not match its header");
  }
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw ParameterError("index holds more than 2^32 items");
  }
  lists_.assign(shape_.coarse, {});
  for (std::size_t i = 0; i < n; ++i) {
    if (coarse_codes_[i] >= shape_.coarse) {
      throw CorruptionError("coarse code out of range for item " +
                                std::to_string(i),
                            0);
    }
    lists_[coarse_codes_[i]].push_back(static_cast<std::uint32_t>(i));
  }
  for (std::uint8_t c : pq_codes_) {
    if (c >= shape_.pq_centroids) {
      throw CorruptionError("PQ code out of range", 0);
    }
  }
}

ItemCode EmbeddingIndex::code(std::uint32_t item) const {
  if (item >= ids_.size()) throw ParameterError("item ordinal out of range");
  ItemCode c;
  c.coarse = coarse_codes_[item];
  const auto* p = pq_codes_.data() + static_cast<std::size_t>(item) * shape_.subspaces;
  c.pq.assign(p, p + shape_.subspaces);
  return c;
}

Vector EmbeddingIndex::reconstruct(std::uint32_t item) const {
  const ItemCode c = code(item);
  const std::size_t d = shape_.dim;
  const std::size_t sub = shape_.sub_dim();
  std::vector<double> rec(d);
  auto base = coarse_.row(c.coarse);
  for (std::size_t j = 0; j < shape_.subspaces; ++j) {
    auto v = pq_.row(j * shape_.pq_centroids + c.pq[j]);
    for (std::size_t t = 0; t < sub; ++t) {
      rec[j * sub + t] = static_cast<double>(base[j * sub + t]) + v[t];
    }
  }
  Vector out(d);
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += rotation_[i * d + k] * rec[i];
    out[k] = static_cast<float>(acc);
  }
  return out;
}

std::vector<SearchHit> EmbeddingIndex::search(std::span<const float> query,
                                              const SearchParams& params) const {
  const std::size_t d = shape_.dim;
  check_same_dim(query.size(), d, "search query");
  if (params.k == 0) throw ParameterError("search: k must be at least 1");
  if (params.nprobe == 0 || params.nprobe > shape_.coarse) {
    throw ParameterError("search: nprobe=" + std::to_string(params.nprobe) +
                         " outside [1, J=" + std::to_string(shape_.coarse) + "]");
  }
  const double qn = norm(query);
  if (qn == 0.0) throw DegenerateInputError("search: zero-norm query");

  std::vector<double> rq(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const float* row = rotation_.data() + i * d;
    double acc = 0.0;
    for (std::size_t t = 0; t < d; ++t) acc += row[t] * (query[t] / qn);
    rq[i] = acc;
  }

  std::vector<Candidate> cells(shape_.coarse);
  for (std::size_t c = 0; c < shape_.coarse; ++c) {
    auto v = coarse_.row(c);
    double acc = 0.0;
    for (std::size_t t = 0; t < d; ++t) acc += rq[t] * v[t];
    cells[c] = {acc, static_cast<std::uint32_t>(c)};
  }
  std::partial_sort(cells.begin(), cells.begin() + params.nprobe, cells.end(),
                    better);

  const std::size_t k_count = shape_.pq_centroids;
  const std::size_t sub = shape_.sub_dim();
  const std::size_t m = shape_.subspaces;
  std::vector<double> lut(m * k_count);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < k_count; ++k) {
      auto v = pq_.row(j * k_count + k);
      double acc = 0.0;
      for (std::size_t t = 0; t < sub; ++t) acc += rq[j * sub + t] * v[t];
      lut[j * k_count + k] = acc;
    }
  }

  std::vector<Candidate> heap;
  heap.reserve(params.k + 1);
  for (std::size_t p = 0; p < params.nprobe; ++p) {
    const double base = cells[p].score;
    for (std::uint32_t item : lists_[cells[p].item]) {
      const std::uint8_t* codes = pq_codes_.data() + static_cast<std::size_t>(item) * m;
      double s = base;
      for (std::size_t j = 0; j < m; ++j) s += lut[j * k_count + codes[j]];
      const Candidate cand{s, item};
      if (heap.size() < params.k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), better);
      } else if (better(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), better);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), better);
      }
    }
  }
  std::sort_heap(heap.begin(), heap.end(), better);
  std::vector<SearchHit> hits;
  hits.reserve(heap.size());
  for (const auto& c : heap) hits.push_back({c.item, c.score});
  return hits;
}

std::vector<std::uint8_t> EmbeddingIndex::serialize() const {
  ByteWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(shape_.dim));
  w.u32(static_cast<std::uint32_t>(shape_.subspaces));
  w.u32(static_cast<std::uint32_t>(shape_.pq_centroids));
  w.u32(static_cast<std::uint32_t>(shape_.coarse));
  w.u32(static_cast<std::uint32_t>(ids_.size()));
  for (float v : rotation_) w.f32(v);
  for (float v : coarse_.values()) w.f32(v);
  for (float v : pq_.values()) w.f32(v);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.u32(coarse_codes_[i]);
    w.bytes(pq_codes_.data() + i * shape_.subspaces, shape_.subspaces);
  }
  for (const auto& id : ids_) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ParameterError("item id longer than 65535 bytes");
    }
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id.data(), id.size());
  }
  return w.take();
}

EmbeddingIndex EmbeddingIndex::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptionError("bad magic", 0);
  }
  r.str(4, "magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kIndexVersion) {
    throw CorruptionError("unsupported version " + std::to_string(version),
                          version_at);
  }
  LayerShape shape;
  const std::size_t header_at = r.offset();
  shape.dim = r.u32("header");
  shape.subspaces = r.u32("header");
  shape.pq_centroids = r.u32("header");
  shape.coarse = r.u32("header");
  const std::size_t n = r.u32("header");
  try {
    shape.validate();
  } catch (const ParameterError& e) {
    throw CorruptionError(std::string("invalid header: ") + e.what(), header_at);
  }

  // Size check up front so a corrupt header cannot trigger a huge allocation.
  const std::uint64_t floats =
      static_cast<std::uint64_t>(shape.dim) * shape.dim +
      static_cast<std::uint64_t>(shape.coarse) * shape.dim +
      static_cast<std::uint64_t>(shape.pq_centroids) * shape.dim;
  const std::uint64_t minimum =
      floats * 4 + static_cast<std::uint64_t>(n) * (4 + shape.subspaces + 2);
  if (minimum > r.remaining()) {
    throw CorruptionError("truncated payload: header promises at least " +
                              std::to_string(minimum) + " more bytes",
                          r.offset());
  }

  std::vector<float> rotation(shape.dim * shape.dim);
  for (float& v : rotation) v = r.f32("rotation");
  Matrix coarse(shape.coarse, shape.dim);
  for (float& v : coarse.values()) v = r.f32("coarse codebook");
  Matrix pq(shape.subspaces * shape.pq_centroids, shape.sub_dim());
  for (float& v : pq.values()) v = r.f32("PQ codebook");

  std::vector<std::uint32_t> coarse_codes(n);
  std::vector<std::uint8_t> pq_codes(n * shape.subspaces);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    coarse_codes[i] = r.u32("item codes");
    if (coarse_codes[i] >= shape.coarse) {
      throw CorruptionError("coarse code out of range", at);
    }
    for (std::size_t j = 0; j < shape.subspaces; ++j) {
      const std::size_t code_at = r.offset();
      const std::uint8_t c = r.u8("item codes");
      if (c >= shape.pq_centroids) {
        throw CorruptionError("PQ code out of range", code_at);
      }
      pq_codes[i * shape.subspaces + j] = c;
    }
  }
  std::vector<std::string> ids(n);
  for (auto& id : ids) {
    const std::uint16_t len = r.u16("vocabulary");
    id = r.str(len, "vocabulary");
  }
  if (r.remaining() != 0) {
    throw CorruptionError("trailing bytes after vocabulary", r.offset());
  }
  return EmbeddingIndex(shape, std::move(rotation), std::move(coarse),
                        std::move(pq), std::move(coarse_codes),
                        std::move(pq_codes), std::move(ids));
}

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write index " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return deserialize(bytes);
}

bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
  return a.shape_ == b.shape_ && a.rotation_ == b.rotation_ &&
         a.coarse_ == b.coarse_ && a.pq_ == b.pq_ &&
         a.coarse_codes_ == b.coarse_codes_ && a.pq_codes_ == b.pq_codes_ &&
         a.ids_ == b.ids_;
}

EmbeddingIndex build_index(const Matrix& items,
                           const std::vector<std::string>& ids,
                           const QuantizerLayer& layer) {
  const LayerShape& shape = layer.shape();
  if (items.rows() == 0) throw ParameterError("build_index: no items");
  check_same_dim(items.cols(), shape.dim, "build_index items");
  if (ids.size() != items.rows()) {
    throw DimensionError("build_index: id count does not match item rows");
  }
  const std::size_t n = items.rows();
  std::vector<std::uint32_t> coarse_codes(n);
  std::vector<std::uint8_t> pq_codes(n * shape.subspaces);
  Vector xr(shape.dim);
  Vector residual(shape.dim);
  for (std::size_t i = 0; i < n; ++i) {
    layer.rotation().rotate_into(items.row(i), xr);
    const std::uint32_t r = layer.coarse_assign(xr).index;
    auto v = layer.coarse().row(r);
    for (std::size_t t = 0; t < shape.dim; ++t) residual[t] = xr[t] - v[t];
    layer.pq_encode_into(residual,
                         std::span<std::uint8_t>(pq_codes.data() + i * shape.subspaces,
                                                 shape.subspaces));
    coarse_codes[i] = r;
  }
  return EmbeddingIndex(shape, layer.rotation().dense_float(), layer.coarse(),
                        layer.pq(), std::move(coarse_codes), std::move(pq_codes),
                        ids);
}

QuantizerLayer offline_layer(const Matrix& items,
                             const OfflineBuildConfig& config, Rng& rng) {
  QuantizerLayer layer(config.shape, config.use_rotation);
  layer.warm_start(items, config.kmeans, rng);
  if (!config.use_rotation) return layer;

  const std::size_t d = config.shape.dim;
  const std::size_t sweep = config.sweep_updates == 0 ? d : config.sweep_updates;
  const std::size_t m = std::min(config.sweep_sample, items.rows());
  for (std::size_t round = 0; round < config.rounds; ++round) {
    std::vector<std::size_t> pick(items.rows());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    rng.shuffle(pick);
    pick.resize(m);

    Matrix xr(m, d);
    Matrix err(m, d);
    for (std::size_t b = 0; b < m; ++b) {
      layer.rotation().rotate_into(items.row(pick[b]), xr.row(b));
      const Vector rec = layer.decode(layer.encode_rotated(xr.row(b)));
      for (std::size_t t = 0; t < d; ++t) err(b, t) = rec[t] - xr(b, t);
    }
    // Codes stay frozen for the sweep; xr and err follow each new factor.
    for (std::size_t u = 0; u < sweep; ++u) {
      const RotationUpdateResult res =
          steepest_update(layer.rotation(), xr, err, config.rotation, rng);
      if (!res.applied) continue;
      const std::uint32_t i = res.factor.axis_i;
      const std::uint32_t j = res.factor.axis_j;
      const double c = std::cos(res.factor.theta);
      const double s = std::sin(res.factor.theta);
      for (std::size_t b = 0; b < m; ++b) {
        const double xi = xr(b, i), xj = xr(b, j);
        const double qi = xi + err(b, i), qj = xj + err(b, j);
        const double ni = c * xi - s * xj;
        const double nj = s * xi + c * xj;
        xr(b, i) = static_cast<float>(ni);
        xr(b, j) = static_cast<float>(nj);
        err(b, i) = static_cast<float>(qi - ni);
        err(b, j) = static_cast<float>(qj - nj);
      }
    }
    layer.refit_codebooks(items, config.kmeans, rng);
  }
  return layer;
}

EmbeddingIndex offline_build(const Matrix& items,
                             const std::vector<std::string>& ids,
                             const OfflineBuildConfig& config, Rng& rng) {
  return build_index(items, ids, offline_layer(items, config, rng));
}

}  // namespace jointpq
