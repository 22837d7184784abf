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

#include "jointpq/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace jointpq {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw ParameterError("config key '" + std::string(key) +
                         "': cannot parse '" + s + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ParameterError("config key '" + std::string(key) +
                       "': expected a boolean, got '" + s + "'");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  std::string s = trim(text);
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    out.push_back(parse_number<std::size_t>(key, part));
  }
  if (out.empty()) {
    throw ParameterError("config key '" + std::string(key) + "': empty list");
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define JPQ_SIZE(name, member)                                                 \
  {                                                                            \
    name, Field {                                                              \
      [](RunConfig& c, std::string_view k, std::string_view v) {               \
        c.member = parse_number<std::size_t>(k, v);                            \
      },                                                                       \
          [](const RunConfig& c) { return std::to_string(c.member); }          \
    }                                                                          \
  }
#define JPQ_DOUBLE(name, member)                                               \
  {                                                                            \
    name, Field {                                                              \
      [](RunConfig& c, std::string_view k, std::string_view v) {               \
        c.member = parse_number<double>(k, v);                                 \
      },                                                                       \
          [](const RunConfig& c) { return fmt_double(c.member); }              \
    }                                                                          \
  }
#define JPQ_BOOL(name, member)                                                 \
  {                                                                            \
    name, Field {                                                              \
      [](RunConfig& c, std::string_view k, std::string_view v) {               \
        c.member = parse_bool(k, v);                                           \
      },                                                                       \
          [](const RunConfig& c) {                                             \
        return std::string(c.member ? "true" : "false");                       \
      }                                                                        \
    }                                                                          \
  }
#define JPQ_PATH(name, member)                                                 \
  {                                                                            \
    name, Field {                                                              \
      [](RunConfig& c, std::string_view, std::string_view v) {                 \
        c.member = trim(v);                                                    \
      },                                                                       \
          [](const RunConfig& c) { return c.member.string(); }                 \
    }                                                                          \
  }

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      JPQ_SIZE("d", train.shape.dim),
      JPQ_SIZE("J", train.shape.coarse),
      JPQ_SIZE("K", train.shape.pq_centroids),
      JPQ_SIZE("D", train.shape.subspaces),
      JPQ_SIZE("steps", train.total_steps),
      {"warm-steps",
       Field{[](RunConfig& c, std::string_view k, std::string_view v) {
               c.train.warm_steps = parse_number<std::size_t>(k, v);
             },
             [](const RunConfig& c) {
               return std::to_string(c.train.resolved_warm_steps());
             }}},
      JPQ_DOUBLE("margin", train.margin),
      JPQ_DOUBLE("lr", train.learning_rate),
      JPQ_SIZE("batch", train.batch_size),
      JPQ_DOUBLE("lambda", train.reg_weight),
      JPQ_SIZE("rotation-period", train.rotation_period),
      JPQ_BOOL("rotation", train.rotation_enabled),
      JPQ_BOOL("cold-start", train.cold_start),
      JPQ_DOUBLE("cold-start-stddev", train.cold_start_stddev),
      JPQ_DOUBLE("init-scale", train.init_scale),
      {"seed",
       Field{[](RunConfig& c, std::string_view k, std::string_view v) {
               c.train.seed = parse_number<std::uint64_t>(k, v);
               c.blobs.seed = c.train.seed;
             },
             [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      JPQ_SIZE("kmeans-iters", train.kmeans.iterations),
      JPQ_DOUBLE("kmeans-tolerance", train.kmeans.tolerance),
      JPQ_SIZE("kmeans-points-per-centroid",
               train.kmeans.max_points_per_centroid),
      JPQ_SIZE("kmeans-restarts", train.kmeans.restarts),
      JPQ_SIZE("kmeans-seed-trials", train.kmeans.seed_trials),
      JPQ_SIZE("rotation-candidates", train.rotation.candidate_pairs),
      JPQ_SIZE("line-search-iters", train.rotation.line_search_iterations),
      JPQ_SIZE("offline-rounds", offline_rounds),
      JPQ_SIZE("nprobe", nprobe),
      {"k",
       Field{[](RunConfig& c, std::string_view k, std::string_view v) {
               c.ks = parse_list(k, v);
             },
             [](const RunConfig& c) { return join(c.ks); }}},
      {"nprobes",
       Field{[](RunConfig& c, std::string_view k, std::string_view v) {
               c.nprobes = parse_list(k, v);
             },
             [](const RunConfig& c) { return join(c.nprobes); }}},
      JPQ_PATH("data", data),
      JPQ_PATH("eval-data", eval_data),
      JPQ_PATH("index", index),
      JPQ_PATH("model", model),
      JPQ_PATH("log", log),
      JPQ_SIZE("blob-clusters", blobs.clusters),
      JPQ_SIZE("blob-items", blobs.items),
      JPQ_SIZE("blob-queries", blobs.queries),
      JPQ_DOUBLE("blob-variance", blobs.variance),
      JPQ_SIZE("blob-train-pairs", blobs.train_pairs_per_query),
      JPQ_SIZE("blob-eval-pairs", blobs.eval_pairs_per_query),
      JPQ_DOUBLE("blob-noise", blobs.noise),
  };
  return table;
}

#undef JPQ_SIZE
#undef JPQ_DOUBLE
#undef JPQ_BOOL
#undef JPQ_PATH

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  auto it = fields().find(k);
  if (it == fields().end()) {
    throw ParameterError("unknown config key '" + k + "'");
  }
  it->second.set(*this, k, value);
  if (k == "d") blobs.dim = train.shape.dim;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError(path.string() + ":" + std::to_string(lineno) +
                           ": expected key=value");
    }
    set(std::string_view(line).substr(0, eq),
        std::string_view(line).substr(eq + 1));
  }
}

std::vector<std::string> RunConfig::dump() const {
  std::vector<std::string> out;
  for (const auto& [name, field] : fields()) {
    out.push_back(name + "=" + field.get(*this));
  }
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, field] : fields()) v.push_back(name);
    return v;
  }();
  return names;
}

OfflineBuildConfig RunConfig::offline() const {
  OfflineBuildConfig c;
  c.shape = train.shape;
  c.use_rotation = train.rotation_enabled;
  c.rounds = offline_rounds;
  c.kmeans = train.kmeans;
  c.rotation = train.rotation;
  return c;
}

}  // namespace jointpq
