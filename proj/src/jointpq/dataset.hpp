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
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jointpq/numeric.hpp"

namespace jointpq {

inline constexpr std::size_t kMaxIdBytes = 256;

/// External string ids to dense ordinals, in first-appearance order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view id);
  std::optional<std::uint32_t> find(std::string_view id) const;
  const std::string& id(std::uint32_t ordinal) const { return ids_.at(ordinal); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

struct PositivePair {
  std::uint32_t query = 0;
  std::uint32_t item = 0;
  friend bool operator==(const PositivePair&, const PositivePair&) = default;
};

/// One positive (query, item) pair per line: `query_id<TAB>item_id`.
/// Lines starting with '#' are comments; blank lines are ignored.
struct PairDataset {
  Vocabulary queries;
  Vocabulary items;
  std::vector<PositivePair> pairs;
  std::size_t malformed_lines = 0;
};

PairDataset parse_pairs(std::istream& in);
/// Throws IoError when unreadable and IngestError when no line is valid.
PairDataset ingest(const std::filesystem::path& path);
void write_pairs(const PairDataset& data, std::ostream& out);
void write_pairs(const PairDataset& data, const std::filesystem::path& path);

/// Synthetic clustered data. Items and queries are spread round-robin over
/// `clusters` Gaussian blobs (centres ~ N(0, 1), spread `variance`); positive
/// pairs always join a query with an item of the same blob, except that a
/// `noise` fraction of training pairs draw the item from a random blob.
struct BlobConfig {
  std::size_t clusters = 100;
  std::size_t items = 10000;
  std::size_t queries = 2000;
  std::size_t dim = 64;
  double variance = 0.05;
  std::size_t train_pairs_per_query = 20;
  std::size_t eval_pairs_per_query = 5;
  double noise = 0.0;
  std::uint64_t seed = 1;
};

struct BlobData {
  PairDataset train;
  PairDataset eval;
  /// Latent vectors, row i belongs to the item with training ordinal i.
  Matrix item_vectors;
  Matrix query_vectors;
  std::vector<std::uint32_t> item_cluster;
  std::vector<std::uint32_t> query_cluster;
};

/// Every item shows up in at least one training pair, and item ordinals in
/// `train` follow generation order. Eval pairs avoid pairs seen in training
/// where the blob is large enough.
BlobData generate_blobs(const BlobConfig& config);

}  // namespace jointpq
