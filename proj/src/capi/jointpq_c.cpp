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

#include "jointpq/jointpq.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "jointpq/config.hpp"
#include "jointpq/pipeline.hpp"

struct jpq_config {
  jointpq::RunConfig value;
};
struct jpq_dataset {
  jointpq::PairDataset value;
};
struct jpq_model {
  jointpq::TrainedModel value;
};
struct jpq_index {
  jointpq::EmbeddingIndex value;
};
struct jpq_report {
  jointpq::Report value;
  std::string rendered;
};

namespace {

thread_local std::string g_last_error;

jpq_status fail(jpq_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
jpq_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return JPQ_OK;
  } catch (const jointpq::Error& e) {
    return fail(static_cast<jpq_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(JPQ_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(JPQ_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(JPQ_ERR_INTERNAL, "unknown error");
  }
}

#define JPQ_REQUIRE(ptr)                                                  \
  do {                                                                    \
    if ((ptr) == nullptr) return fail(JPQ_ERR_NULL_ARGUMENT, #ptr " is null"); \
  } while (0)

}  // namespace

extern "C" {

const char* jpq_status_string(jpq_status status) {
  switch (status) {
    case JPQ_OK: return "ok";
    case JPQ_ERR_DIMENSION: return "dimension mismatch";
    case JPQ_ERR_PARAMETER: return "invalid parameter";
    case JPQ_ERR_DEGENERATE: return "degenerate input";
    case JPQ_ERR_CORRUPTION: return "corrupt file";
    case JPQ_ERR_IO: return "i/o error";
    case JPQ_ERR_INGEST: return "ingest error";
    case JPQ_ERR_STATE: return "invalid state";
    case JPQ_ERR_NULL_ARGUMENT: return "null argument";
    case JPQ_ERR_NOT_FOUND: return "not found";
    case JPQ_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* jpq_last_error(void) { return g_last_error.c_str(); }

jpq_status jpq_config_create(jpq_config** out) {
  JPQ_REQUIRE(out);
  return guarded([&] { *out = new jpq_config(); });
}

void jpq_config_destroy(jpq_config* config) { delete config; }

jpq_status jpq_config_set(jpq_config* config, const char* key, const char* value) {
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(key);
  JPQ_REQUIRE(value);
  return guarded([&] { config->value.set(key, value); });
}

jpq_status jpq_config_load(jpq_config* config, const char* path) {
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(path);
  return guarded([&] { config->value.load_file(path); });
}

jpq_status jpq_config_get(const jpq_config* config, const char* key, char* buf,
                          size_t capacity, size_t* needed) {
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(key);
  const std::string prefix = std::string(key) + "=";
  for (const auto& entry : config->value.dump()) {
    if (entry.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string v = entry.substr(prefix.size());
    if (needed) *needed = v.size();
    if (buf && capacity > 0) {
      const size_t n = std::min(capacity - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
    g_last_error.clear();
    return JPQ_OK;
  }
  return fail(JPQ_ERR_NOT_FOUND, std::string("unknown config key: ") + key);
}

jpq_status jpq_dataset_load(const char* path, jpq_dataset** out) {
  JPQ_REQUIRE(path);
  JPQ_REQUIRE(out);
  return guarded([&] { *out = new jpq_dataset{jointpq::ingest(path)}; });
}

jpq_status jpq_dataset_generate_blobs(const jpq_config* config,
                                      jpq_dataset** train, jpq_dataset** eval) {
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(train);
  JPQ_REQUIRE(eval);
  return guarded([&] {
    jointpq::BlobData blobs = jointpq::generate_blobs(config->value.blobs);
    auto t = std::make_unique<jpq_dataset>(jpq_dataset{std::move(blobs.train)});
    auto e = std::make_unique<jpq_dataset>(jpq_dataset{std::move(blobs.eval)});
    *train = t.release();
    *eval = e.release();
  });
}

jpq_status jpq_dataset_save(const jpq_dataset* data, const char* path) {
  JPQ_REQUIRE(data);
  JPQ_REQUIRE(path);
  return guarded([&] {
    jointpq::write_pairs(data->value, std::filesystem::path(path));
  });
}

jpq_status jpq_dataset_stats_get(const jpq_dataset* data, jpq_dataset_stats* out) {
  JPQ_REQUIRE(data);
  JPQ_REQUIRE(out);
  out->queries = data->value.queries.size();
  out->items = data->value.items.size();
  out->pairs = data->value.pairs.size();
  out->malformed_lines = data->value.malformed_lines;
  g_last_error.clear();
  return JPQ_OK;
}

void jpq_dataset_destroy(jpq_dataset* data) { delete data; }

jpq_status jpq_train(const jpq_config* config, const jpq_dataset* data,
                     const char* log_path, jpq_model** model, jpq_index** index) {
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(data);
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(index);
  return guarded([&] {
    std::ofstream log;
    if (log_path) {
      log.open(log_path, std::ios::trunc);
      if (!log) throw jointpq::IoError(std::string("cannot write log ") + log_path);
    }
    jointpq::TrainOutputs out = jointpq::train_and_build(
        data->value, config->value, log_path ? &log : nullptr);
    if (log_path) {
      log.flush();
      if (!log) throw jointpq::IoError(std::string("write failure on ") + log_path);
    }
    auto m = std::make_unique<jpq_model>(jpq_model{std::move(out.model)});
    auto i = std::make_unique<jpq_index>(jpq_index{std::move(out.index)});
    *model = m.release();
    *index = i.release();
  });
}

jpq_status jpq_model_save(const jpq_model* model, const char* path) {
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(path);
  return guarded([&] { jointpq::save_model(model->value, path); });
}

jpq_status jpq_model_load(const char* path, jpq_model** out) {
  JPQ_REQUIRE(path);
  JPQ_REQUIRE(out);
  return guarded([&] { *out = new jpq_model{jointpq::load_model(path)}; });
}

jpq_status jpq_model_info_get(const jpq_model* model, jpq_model_info* out) {
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(out);
  out->dim = model->value.query_table.cols();
  out->queries = model->value.queries.size();
  out->items = model->value.items.size();
  out->has_layer = model->value.layer.has_value() ? 1 : 0;
  g_last_error.clear();
  return JPQ_OK;
}

jpq_status jpq_model_query_embedding(const jpq_model* model, const char* query_id,
                                     float* out, size_t dim) {
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(query_id);
  JPQ_REQUIRE(out);
  const auto emb = model->value.query_embedding(query_id);
  if (!emb) return fail(JPQ_ERR_NOT_FOUND, std::string("unknown query id: ") + query_id);
  if (emb->size() != dim) {
    return fail(JPQ_ERR_DIMENSION, "embedding width is " + std::to_string(emb->size()) +
                                       ", buffer holds " + std::to_string(dim));
  }
  std::copy(emb->begin(), emb->end(), out);
  g_last_error.clear();
  return JPQ_OK;
}

jpq_status jpq_model_build_index(const jpq_model* model, jpq_index** out) {
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(out);
  if (!model->value.layer) {
    return fail(JPQ_ERR_STATE, "model has no trained indexing layer");
  }
  return guarded([&] {
    *out = new jpq_index{jointpq::build_index(
        model->value.item_table, model->value.items.ids(), *model->value.layer)};
  });
}

jpq_status jpq_model_offline_index(const jpq_model* model, const jpq_config* config,
                                   jpq_index** out) {
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(out);
  return guarded([&] {
    jointpq::Rng rng(config->value.train.seed, "offline_build");
    *out = new jpq_index{jointpq::offline_build(model->value.item_table,
                                                model->value.items.ids(),
                                                config->value.offline(), rng)};
  });
}

void jpq_model_destroy(jpq_model* model) { delete model; }

jpq_status jpq_index_save(const jpq_index* index, const char* path) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(path);
  return guarded([&] { jointpq::save_index_checked(index->value, path); });
}

jpq_status jpq_index_load(const char* path, jpq_index** out) {
  JPQ_REQUIRE(path);
  JPQ_REQUIRE(out);
  return guarded([&] { *out = new jpq_index{jointpq::EmbeddingIndex::load(path)}; });
}

jpq_status jpq_index_info_get(const jpq_index* index, jpq_index_info* out) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(out);
  const auto& s = index->value.shape();
  out->dim = s.dim;
  out->coarse = s.coarse;
  out->pq_centroids = s.pq_centroids;
  out->subspaces = s.subspaces;
  out->items = index->value.size();
  g_last_error.clear();
  return JPQ_OK;
}

jpq_status jpq_index_search(const jpq_index* index, const float* query, size_t dim,
                            size_t k, size_t nprobe, jpq_hit* hits, size_t capacity,
                            size_t* count) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(query);
  JPQ_REQUIRE(count);
  if (capacity > 0) JPQ_REQUIRE(hits);
  return guarded([&] {
    const auto result = index->value.search(std::span<const float>(query, dim),
                                            jointpq::SearchParams{k, nprobe});
    const size_t n = std::min(capacity, result.size());
    for (size_t i = 0; i < n; ++i) hits[i] = jpq_hit{result[i].item, result[i].score};
    *count = n;
  });
}

jpq_status jpq_index_item_id(const jpq_index* index, uint32_t item, const char** id) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(id);
  if (item >= index->value.size()) {
    return fail(JPQ_ERR_NOT_FOUND, "item ordinal " + std::to_string(item) +
                                       " out of range");
  }
  *id = index->value.ids()[item].c_str();
  g_last_error.clear();
  return JPQ_OK;
}

jpq_status jpq_index_rotation(const jpq_index* index, float* out, size_t capacity) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(out);
  const auto r = index->value.rotation();
  if (capacity < r.size()) {
    return fail(JPQ_ERR_DIMENSION, "rotation needs " + std::to_string(r.size()) +
                                       " floats");
  }
  std::copy(r.begin(), r.end(), out);
  g_last_error.clear();
  return JPQ_OK;
}

jpq_status jpq_index_utilization(const jpq_index* index, size_t* used, size_t* total) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(used);
  JPQ_REQUIRE(total);
  const auto u = jointpq::coarse_utilization(index->value);
  *used = u.used;
  *total = u.total;
  g_last_error.clear();
  return JPQ_OK;
}

void jpq_index_destroy(jpq_index* index) { delete index; }

jpq_status jpq_evaluate(const jpq_index* index, const jpq_model* model,
                        const jpq_dataset* eval, const jpq_config* config,
                        jpq_report** out) {
  JPQ_REQUIRE(index);
  JPQ_REQUIRE(model);
  JPQ_REQUIRE(eval);
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(out);
  return guarded([&] {
    auto report = std::make_unique<jpq_report>();
    report->value = jointpq::evaluate_index(index->value, model->value, eval->value,
                                            config->value.ks, config->value.nprobes);
    report->value.config = config->value.dump();
    *out = report.release();
  });
}

jpq_status jpq_compare(const jpq_config* config, const jpq_dataset* train,
                       const jpq_dataset* eval, jpq_report** out) {
  JPQ_REQUIRE(config);
  JPQ_REQUIRE(train);
  JPQ_REQUIRE(eval);
  JPQ_REQUIRE(out);
  return guarded([&] {
    auto report = std::make_unique<jpq_report>();
    report->value = jointpq::compare(train->value, eval->value, config->value);
    *out = report.release();
  });
}

jpq_status jpq_report_text(jpq_report* report, int with_timings, const char** out) {
  JPQ_REQUIRE(report);
  JPQ_REQUIRE(out);
  return guarded([&] {
    report->rendered = report->value.to_text(with_timings != 0);
    *out = report->rendered.c_str();
  });
}

jpq_status jpq_report_json(jpq_report* report, int with_timings, const char** out) {
  JPQ_REQUIRE(report);
  JPQ_REQUIRE(out);
  return guarded([&] {
    report->rendered = report->value.to_json(with_timings != 0);
    *out = report->rendered.c_str();
  });
}

jpq_status jpq_report_fact(const jpq_report* report, const char* name, double* value) {
  JPQ_REQUIRE(report);
  JPQ_REQUIRE(name);
  JPQ_REQUIRE(value);
  if (auto v = report->value.fact(name)) {
    *value = *v;
    g_last_error.clear();
    return JPQ_OK;
  }
  for (const auto& [key, v] : report->value.timings) {
    if (key == name) {
      *value = v;
      g_last_error.clear();
      return JPQ_OK;
    }
  }
  return fail(JPQ_ERR_NOT_FOUND, std::string("no fact named ") + name);
}

void jpq_report_destroy(jpq_report* report) { delete report; }

}  // extern "C"
