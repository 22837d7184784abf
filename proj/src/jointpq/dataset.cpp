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

#include "jointpq/dataset.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace jointpq {

std::uint32_t Vocabulary::intern(std::string_view id) {
  auto it = lookup_.find(std::string(id));
  if (it != lookup_.end()) return it->second;
  const auto ordinal = static_cast<std::uint32_t>(ids_.size());
  ids_.emplace_back(id);
  lookup_.emplace(ids_.back(), ordinal);
  return ordinal;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view id) const {
  auto it = lookup_.find(std::string(id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

PairDataset parse_pairs(std::istream& in) {
  PairDataset data;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      ++data.malformed_lines;
      continue;
    }
    std::string_view query(line.data(), tab);
    std::string_view item(line.data() + tab + 1, line.size() - tab - 1);
    if (query.empty() || item.empty() || query.size() > kMaxIdBytes ||
        item.size() > kMaxIdBytes) {
      ++data.malformed_lines;
      continue;
    }
    data.pairs.push_back({data.queries.intern(query), data.items.intern(item)});
  }
  return data;
}

PairDataset ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  PairDataset data = parse_pairs(in);
  if (in.bad()) throw IoError("read failure on " + path.string());
  if (data.pairs.empty()) {
    throw IngestError("no valid pairs in " + path.string() + " (" +
                      std::to_string(data.malformed_lines) + " malformed)");
  }
  return data;
}

void write_pairs(const PairDataset& data, std::ostream& out) {
  for (const auto& p : data.pairs) {
    out << data.queries.id(p.query) << '\t' << data.items.id(p.item) << '\n';
  }
}

void write_pairs(const PairDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_pairs(data, out);
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

BlobData generate_blobs(const BlobConfig& config) {
  if (config.clusters == 0 || config.items < config.clusters ||
      config.queries < config.clusters || config.dim == 0) {
    throw ParameterError(
        "blob generator needs at least one item and one query per cluster");
  }
  if (config.noise < 0.0 || config.noise > 1.0) {
    throw ParameterError("blob noise must lie in [0, 1]");
  }
  const std::size_t c_count = config.clusters;
  const std::size_t d = config.dim;
  Rng rng(config.seed, "blobs");
  const double spread = std::sqrt(config.variance);

  Matrix centres(c_count, d);
  for (float& v : centres.values()) v = static_cast<float>(rng.normal());
  auto sample_rows = [&](std::size_t n) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto centre = centres.row(i % c_count);
      auto row = m.row(i);
      for (std::size_t t = 0; t < d; ++t) {
        row[t] = static_cast<float>(centre[t] + spread * rng.normal());
      }
    }
    return m;
  };
  Matrix items = sample_rows(config.items);
  Matrix queries = sample_rows(config.queries);

  // Members of cluster c are c, c + C, c + 2C, ...
  auto members = [&](std::size_t cluster, std::size_t total) {
    return (total - cluster + c_count - 1) / c_count;
  };
  auto random_member = [&](std::size_t cluster, std::size_t total) {
    return cluster + c_count * rng.below(members(cluster, total));
  };
  auto item_id = [](std::size_t i) { return "i" + std::to_string(i); };
  auto query_id = [](std::size_t q) { return "q" + std::to_string(q); };

  BlobData out;
  std::vector<std::set<std::size_t>> seen(config.queries);
  auto add_train = [&](std::size_t q, std::size_t i) {
    out.train.pairs.push_back({out.train.queries.intern(query_id(q)),
                               out.train.items.intern(item_id(i))});
    seen[q].insert(i);
  };

  // Coverage pass: item i first appears at pair i.
  for (std::size_t i = 0; i < config.items; ++i) {
    const std::size_t cluster = i % c_count;
    std::size_t q = i % config.queries;
    if (q % c_count != cluster) q = random_member(cluster, config.queries);
    add_train(q, i);
  }
  for (std::size_t q = 0; q < config.queries; ++q) {
    const std::size_t cluster = q % c_count;
    for (std::size_t t = 0; t < config.train_pairs_per_query; ++t) {
      const bool noisy = config.noise > 0.0 && rng.uniform() < config.noise;
      const std::size_t target = noisy ? rng.below(c_count) : cluster;
      add_train(q, random_member(target, config.items));
    }
  }

  for (std::size_t q = 0; q < config.queries; ++q) {
    const std::size_t cluster = q % c_count;
    const std::size_t available = members(cluster, config.items);
    std::set<std::size_t> chosen;
    const std::size_t wanted = std::min(config.eval_pairs_per_query, available);
    std::size_t attempts = 0;
    while (chosen.size() < wanted) {
      const std::size_t i = random_member(cluster, config.items);
      const bool fresh = !seen[q].contains(i) || attempts > 50 * wanted;
      if (fresh) chosen.insert(i);
      ++attempts;
    }
    for (std::size_t i : chosen) {
      out.eval.pairs.push_back({out.eval.queries.intern(query_id(q)),
                                out.eval.items.intern(item_id(i))});
    }
  }

  out.item_vectors = std::move(items);
  out.item_cluster.resize(config.items);
  for (std::size_t i = 0; i < config.items; ++i) {
    out.item_cluster[i] = static_cast<std::uint32_t>(i % c_count);
  }
  // Query rows follow training ordinals, which need not match generation
  // order.
  const std::size_t seen_queries = out.train.queries.size();
  out.query_vectors = Matrix(seen_queries, d);
  out.query_cluster.resize(seen_queries);
  for (std::uint32_t ord = 0; ord < seen_queries; ++ord) {
    const std::size_t q = std::stoul(out.train.queries.id(ord).substr(1));
    auto src = queries.row(q);
    std::copy(src.begin(), src.end(), out.query_vectors.row(ord).begin());
    out.query_cluster[ord] = static_cast<std::uint32_t>(q % c_count);
  }
  return out;
}

}  // namespace jointpq
