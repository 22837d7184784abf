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

#include "jointpq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "jointpq/bytes.hpp"

namespace jointpq {

namespace {

constexpr char kModelMagic[4] = {'P', 'Q', 'M', 'D'};
constexpr std::uint32_t kModelVersion = 1;

void write_ids(ByteWriter& w, const Vocabulary& vocab) {
  for (const auto& id : vocab.ids()) {
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id.data(), id.size());
  }
}

void write_floats(ByteWriter& w, std::span<const float> values) {
  for (float v : values) w.f32(v);
}

Vocabulary read_ids(ByteReader& r, std::size_t n) {
  Vocabulary vocab;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const std::uint16_t len = r.u16("vocabulary");
    const std::string id = r.str(len, "vocabulary");
    if (vocab.intern(id) != i) throw CorruptionError("duplicate id", at);
  }
  return vocab;
}

Matrix read_matrix(ByteReader& r, std::size_t rows, std::size_t cols,
                   const char* what) {
  r.need(rows * cols * 4, what);
  Matrix m(rows, cols);
  for (float& v : m.values()) v = r.f32(what);
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::string metric_key(const char* metric, std::size_t k, std::size_t nprobe) {
  return std::string(metric) + "@" + std::to_string(k) + "_nprobe" +
         std::to_string(nprobe);
}

}  // namespace

std::optional<Vector> TrainedModel::query_embedding(std::string_view id) const {
  const auto ord = queries.find(id);
  if (!ord) return std::nullopt;
  auto row = query_table.row(*ord);
  return Vector(row.begin(), row.end());
}

std::vector<std::uint8_t> serialize_model(const TrainedModel& model) {
  const std::size_t d = model.query_table.cols();
  if (model.item_table.cols() != d ||
      model.query_table.rows() != model.queries.size() ||
      model.item_table.rows() != model.items.size()) {
    throw DimensionError("model tables do not match their vocabularies");
  }
  ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(model.queries.size()));
  w.u32(static_cast<std::uint32_t>(model.items.size()));
  w.u8(model.layer ? 1 : 0);
  write_ids(w, model.queries);
  write_ids(w, model.items);
  write_floats(w, model.query_table.values());
  write_floats(w, model.item_table.values());
  if (model.layer) {
    const LayerShape& s = model.layer->shape();
    w.u32(static_cast<std::uint32_t>(s.coarse));
    w.u32(static_cast<std::uint32_t>(s.pq_centroids));
    w.u32(static_cast<std::uint32_t>(s.subspaces));
    w.u8(model.layer->rotation_enabled() ? 1 : 0);
    write_floats(w, model.layer->rotation().dense_float());
    write_floats(w, model.layer->coarse().values());
    write_floats(w, model.layer->pq().values());
  }
  return w.take();
}

TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::string magic = r.str(4, "magic");
  if (magic != std::string(kModelMagic, 4)) throw CorruptionError("bad magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kModelVersion) {
    throw CorruptionError("unsupported model version", 4);
  }
  const std::size_t d = r.u32("header");
  const std::size_t nq = r.u32("header");
  const std::size_t ni = r.u32("header");
  const std::uint8_t has_layer = r.u8("header");
  if (d == 0) throw CorruptionError("zero embedding width", 8);
  if ((nq + ni) * (d * 4 + 2) > r.remaining()) {
    throw CorruptionError("truncated model payload", r.offset());
  }
  TrainedModel m;
  m.queries = read_ids(r, nq);
  m.items = read_ids(r, ni);
  m.query_table = read_matrix(r, nq, d, "query table");
  m.item_table = read_matrix(r, ni, d, "item table");
  if (has_layer) {
    LayerShape shape;
    shape.dim = d;
    const std::size_t at = r.offset();
    shape.coarse = r.u32("layer header");
    shape.pq_centroids = r.u32("layer header");
    shape.subspaces = r.u32("layer header");
    const bool rotation_enabled = r.u8("layer header") != 0;
    try {
      shape.validate();
    } catch (const ParameterError& e) {
      throw CorruptionError(std::string("invalid layer header: ") + e.what(), at);
    }
    if ((d * d + shape.coarse * d + shape.pq_centroids * d) * 4 > r.remaining()) {
      throw CorruptionError("truncated layer payload", r.offset());
    }
    Matrix rotation = read_matrix(r, d, d, "rotation");
    Matrix coarse = read_matrix(r, shape.coarse, d, "coarse codebook");
    Matrix pq = read_matrix(r, shape.subspaces * shape.pq_centroids,
                            shape.sub_dim(), "PQ codebook");
    m.layer = QuantizerLayer::from_parts(
        shape, rotation_enabled, RotationMatrix::from_dense(d, rotation.values()),
        std::move(coarse), std::move(pq));
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes", r.offset());
  return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

TrainOutputs train_and_build(const PairDataset& data, const RunConfig& config,
                             std::ostream* log) {
  TrainingRun run = run_training(data, config.train, log);
  TrainOutputs out;
  out.model.queries = data.queries;
  out.model.items = data.items;
  out.model.query_table = run.model.query_table();
  out.model.item_table = run.model.item_table();
  out.model.layer = std::move(run.layer);
  out.log = std::move(run.log);
  const auto start = std::chrono::steady_clock::now();
  out.index = build_index(out.model.item_table, out.model.items.ids(),
                          *out.model.layer);
  out.build_seconds = seconds_since(start);
  return out;
}

void save_index_checked(const EmbeddingIndex& index,
                        const std::filesystem::path& path) {
  index.save(path);
  const EmbeddingIndex back = EmbeddingIndex::load(path);
  if (!(back.shape() == index.shape()) || back.size() != index.size()) {
    throw IoError("re-loaded index header differs from what was written to " +
                  path.string());
  }
}

const MetricRow* Report::find(std::string_view method, std::size_t nprobe,
                              std::size_t k) const {
  for (const auto& r : rows) {
    if (r.method == method && r.nprobe == nprobe && r.k == k) return &r;
  }
  return nullptr;
}

std::optional<double> Report::fact(std::string_view name) const {
  for (const auto& [key, value] : facts) {
    if (key == name) return value;
  }
  return std::nullopt;
}

std::string Report::to_text(bool with_timings) const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  for (const auto& r : rows) {
    os << r.method << ".precision@" << r.k << ".nprobe" << r.nprobe << '='
       << r.precision << '\n';
    os << r.method << ".recall@" << r.k << ".nprobe" << r.nprobe << '='
       << r.recall << '\n';
  }
  for (const auto& [key, value] : facts) os << key << '=' << value << '\n';
  if (with_timings) {
    for (const auto& [key, value] : timings) os << key << '=' << value << '\n';
  }
  return os.str();
}

std::string Report::to_json(bool with_timings) const {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"method", r.method},
                         {"nprobe", r.nprobe},
                         {"k", r.k},
                         {"precision", r.precision},
                         {"recall", r.recall}});
  }
  nlohmann::ordered_json facts_json = nlohmann::ordered_json::object();
  for (const auto& [key, value] : facts) facts_json[key] = value;
  j["facts"] = facts_json;
  if (with_timings) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [key, value] : timings) t[key] = value;
    j["timings"] = t;
  }
  j["config"] = config;
  return j.dump();
}

Report evaluate_index(const EmbeddingIndex& index, const TrainedModel& model,
                      const PairDataset& eval, std::span<const std::size_t> ks,
                      std::span<const std::size_t> nprobes,
                      const std::string& method) {
  if (ks.empty() || nprobes.empty()) {
    throw ParameterError("evaluate: need at least one k and one nprobe");
  }
  std::unordered_map<std::string_view, std::uint32_t> item_ord;
  for (std::uint32_t i = 0; i < index.size(); ++i) item_ord[index.ids()[i]] = i;
  std::unordered_map<std::string, std::uint32_t> unknown_items;

  // Relevant sets grouped per eval query, in first-appearance order.
  std::vector<std::vector<std::uint32_t>> relevant(eval.queries.size());
  for (const auto& p : eval.pairs) {
    const std::string& id = eval.items.id(p.item);
    std::uint32_t ord;
    if (auto it = item_ord.find(id); it != item_ord.end()) {
      ord = it->second;
    } else {
      auto [u, inserted] = unknown_items.emplace(
          id, static_cast<std::uint32_t>(index.size() + unknown_items.size()));
      ord = u->second;
    }
    auto& rel = relevant[p.query];
    if (std::find(rel.begin(), rel.end(), ord) == rel.end()) rel.push_back(ord);
  }

  std::vector<EvalRecord> base;
  std::vector<Vector> query_vecs;
  std::size_t unknown_queries = 0;
  for (std::uint32_t q = 0; q < eval.queries.size(); ++q) {
    auto emb = model.query_embedding(eval.queries.id(q));
    if (!emb) {
      ++unknown_queries;
      continue;
    }
    base.push_back({q, relevant[q], {}});
    query_vecs.push_back(std::move(*emb));
  }
  if (base.empty()) throw IngestError("evaluate: no eval query is known to the model");

  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  Report report;
  for (std::size_t nprobe : nprobes) {
    std::vector<EvalRecord> records = base;
    for (std::size_t r = 0; r < records.size(); ++r) {
      for (const auto& hit : index.search(query_vecs[r], {k_max, nprobe})) {
        records[r].retrieved.push_back(hit.item);
      }
    }
    for (std::size_t k : ks) {
      MetricRow row;
      row.method = method;
      row.nprobe = nprobe;
      row.k = k;
      row.precision = precision_at_k(records, k);
      row.recall = recall_at_k(records, k).value;
      report.rows.push_back(row);
    }
  }
  const Utilization u = coarse_utilization(index);
  report.facts.emplace_back("queries_evaluated", static_cast<double>(base.size()));
  report.facts.emplace_back("unknown_queries", static_cast<double>(unknown_queries));
  report.facts.emplace_back(method + "_coarse_used", static_cast<double>(u.used));
  report.facts.emplace_back(method + "_coarse_total", static_cast<double>(u.total));
  return report;
}

Report compare(const PairDataset& train, const PairDataset& eval,
               const RunConfig& config) {
  const TrainConfig& tc = config.train;
  Trainer base(train, tc);
  base.run_warm(tc.resolved_warm_steps());

  Trainer joint = base;
  joint.attach_layer();
  joint.run_joint(tc.total_steps);

  Trainer frozen = std::move(base);
  frozen.run_warm(tc.total_steps);

  TrainedModel joint_model{train.queries, train.items, joint.model().query_table(),
                           joint.model().item_table(), joint.layer()};
  auto start = std::chrono::steady_clock::now();
  const EmbeddingIndex joint_index =
      build_index(joint_model.item_table, train.items.ids(), *joint_model.layer);
  const double joint_seconds = seconds_since(start);

  TrainedModel offline_model{train.queries, train.items,
                             frozen.model().query_table(),
                             frozen.model().item_table(), std::nullopt};
  Rng offline_rng(tc.seed, "offline_build");
  start = std::chrono::steady_clock::now();
  QuantizerLayer offline = offline_layer(offline_model.item_table,
                                         config.offline(), offline_rng);
  const EmbeddingIndex offline_index =
      build_index(offline_model.item_table, train.items.ids(), offline);
  const double offline_seconds = seconds_since(start);
  offline_model.layer = std::move(offline);

  Report joint_report = evaluate_index(joint_index, joint_model, eval, config.ks,
                                       config.nprobes, "joint");
  Report offline_report = evaluate_index(offline_index, offline_model, eval,
                                         config.ks, config.nprobes, "offline");
  Report report;
  report.rows = joint_report.rows;
  report.rows.insert(report.rows.end(), offline_report.rows.begin(),
                     offline_report.rows.end());
  for (std::size_t nprobe : config.nprobes) {
    for (std::size_t k : config.ks) {
      const MetricRow* a = report.find("joint", nprobe, k);
      const MetricRow* b = report.find("offline", nprobe, k);
      report.facts.emplace_back(metric_key("delta_recall", k, nprobe),
                                a->recall - b->recall);
      report.facts.emplace_back(metric_key("delta_precision", k, nprobe),
                                a->precision - b->precision);
    }
  }
  for (const auto* r : {&joint_report, &offline_report}) {
    for (const auto& f : r->facts) {
      if (f.first.find("coarse") != std::string::npos) report.facts.push_back(f);
    }
  }
  report.facts.emplace_back("queries_evaluated", *joint_report.fact("queries_evaluated"));
  report.facts.emplace_back("unknown_queries", *joint_report.fact("unknown_queries"));
  report.facts.emplace_back(
      "joint_mean_distortion",
      mean_distortion(*joint_model.layer, joint_model.item_table));
  report.facts.emplace_back(
      "offline_mean_distortion",
      mean_distortion(*offline_model.layer, offline_model.item_table));
  report.timings.emplace_back("joint_build_seconds", joint_seconds);
  report.timings.emplace_back("offline_build_seconds", offline_seconds);
  report.config = config.dump();
  return report;
}

}  // namespace jointpq
