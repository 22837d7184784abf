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

/* C interface to jointpq: training, IVF-PQ index build, search and
 * evaluation. Every object is an opaque handle owned by the caller and
 * released with its matching *_destroy function. Functions return a
 * jpq_status; on failure jpq_last_error() describes the most recent error
 * raised on the calling thread. */

#ifndef JOINTPQ_JOINTPQ_H_
#define JOINTPQ_JOINTPQ_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define JPQ_API __declspec(dllexport)
#else
#define JPQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum jpq_status {
  JPQ_OK = 0,
  JPQ_ERR_DIMENSION = 1,
  JPQ_ERR_PARAMETER = 2,
  JPQ_ERR_DEGENERATE = 3,
  JPQ_ERR_CORRUPTION = 4,
  JPQ_ERR_IO = 5,
  JPQ_ERR_INGEST = 6,
  JPQ_ERR_STATE = 7,
  JPQ_ERR_NULL_ARGUMENT = 8,
  JPQ_ERR_NOT_FOUND = 9,
  JPQ_ERR_INTERNAL = 10
} jpq_status;

typedef struct jpq_config jpq_config;
typedef struct jpq_dataset jpq_dataset;
typedef struct jpq_model jpq_model;
typedef struct jpq_index jpq_index;
typedef struct jpq_report jpq_report;

typedef struct jpq_dataset_stats {
  size_t queries;
  size_t items;
  size_t pairs;
  size_t malformed_lines;
} jpq_dataset_stats;

typedef struct jpq_model_info {
  size_t dim;
  size_t queries;
  size_t items;
  int has_layer;
} jpq_model_info;

typedef struct jpq_index_info {
  size_t dim;
  size_t coarse;       /* J */
  size_t pq_centroids; /* K */
  size_t subspaces;    /* D */
  size_t items;
} jpq_index_info;

typedef struct jpq_hit {
  uint32_t item;
  double score;
} jpq_hit;

JPQ_API const char* jpq_status_string(jpq_status status);
/* Message of the last failure on this thread; empty if none. */
JPQ_API const char* jpq_last_error(void);

/* Configuration: flat key=value settings, see README for the key list. */
JPQ_API jpq_status jpq_config_create(jpq_config** out);
JPQ_API void jpq_config_destroy(jpq_config* config);
JPQ_API jpq_status jpq_config_set(jpq_config* config, const char* key,
                                  const char* value);
JPQ_API jpq_status jpq_config_load(jpq_config* config, const char* path);
/* Copies the current value of `key` into buf (NUL-terminated). *needed gets
 * the full length without the terminator; buf may be NULL to query it. */
JPQ_API jpq_status jpq_config_get(const jpq_config* config, const char* key,
                                  char* buf, size_t capacity, size_t* needed);

/* Datasets of positive (query id, item id) pairs. */
JPQ_API jpq_status jpq_dataset_load(const char* path, jpq_dataset** out);
JPQ_API jpq_status jpq_dataset_generate_blobs(const jpq_config* config,
                                              jpq_dataset** train,
                                              jpq_dataset** eval);
JPQ_API jpq_status jpq_dataset_save(const jpq_dataset* data, const char* path);
JPQ_API jpq_status jpq_dataset_stats_get(const jpq_dataset* data,
                                         jpq_dataset_stats* out);
JPQ_API void jpq_dataset_destroy(jpq_dataset* data);

/* Trains per config and builds the encode-only index. log_path may be NULL;
 * otherwise one JSON line per step is written there. */
JPQ_API jpq_status jpq_train(const jpq_config* config, const jpq_dataset* data,
                             const char* log_path, jpq_model** model,
                             jpq_index** index);

JPQ_API jpq_status jpq_model_save(const jpq_model* model, const char* path);
JPQ_API jpq_status jpq_model_load(const char* path, jpq_model** out);
JPQ_API jpq_status jpq_model_info_get(const jpq_model* model,
                                      jpq_model_info* out);
/* Writes the query tower row for `query_id` into out[0..dim). */
JPQ_API jpq_status jpq_model_query_embedding(const jpq_model* model,
                                             const char* query_id, float* out,
                                             size_t dim);
/* Encodes the model's items with its trained layer. */
JPQ_API jpq_status jpq_model_build_index(const jpq_model* model,
                                         jpq_index** out);
/* Learns codebooks on the model's item embeddings after the fact (k-means,
 * optional rotation sweeps) at the config's J, K, D, then encodes. */
JPQ_API jpq_status jpq_model_offline_index(const jpq_model* model,
                                           const jpq_config* config,
                                           jpq_index** out);
JPQ_API void jpq_model_destroy(jpq_model* model);

/* Writes the index, re-loads it and checks the header. */
JPQ_API jpq_status jpq_index_save(const jpq_index* index, const char* path);
JPQ_API jpq_status jpq_index_load(const char* path, jpq_index** out);
JPQ_API jpq_status jpq_index_info_get(const jpq_index* index,
                                      jpq_index_info* out);
/* Fills up to `capacity` hits, best first; *count gets the number written. */
JPQ_API jpq_status jpq_index_search(const jpq_index* index, const float* query,
                                    size_t dim, size_t k, size_t nprobe,
                                    jpq_hit* hits, size_t capacity,
                                    size_t* count);
/* The returned pointer stays valid for the lifetime of the index. */
JPQ_API jpq_status jpq_index_item_id(const jpq_index* index, uint32_t item,
                                     const char** id);
/* Copies the d×d rotation, row-major, into out (capacity ≥ d·d). */
JPQ_API jpq_status jpq_index_rotation(const jpq_index* index, float* out,
                                      size_t capacity);
JPQ_API jpq_status jpq_index_utilization(const jpq_index* index, size_t* used,
                                         size_t* total);
JPQ_API void jpq_index_destroy(jpq_index* index);

/* p@k / r@k over the config's `k` and `nprobes` lists. */
JPQ_API jpq_status jpq_evaluate(const jpq_index* index, const jpq_model* model,
                                const jpq_dataset* eval,
                                const jpq_config* config, jpq_report** out);
/* Joint training versus offline indexing from one shared warm-up. */
JPQ_API jpq_status jpq_compare(const jpq_config* config,
                               const jpq_dataset* train,
                               const jpq_dataset* eval, jpq_report** out);
/* Rendered report; the string is owned by the report. */
JPQ_API jpq_status jpq_report_text(jpq_report* report, int with_timings,
                                   const char** out);
JPQ_API jpq_status jpq_report_json(jpq_report* report, int with_timings,
                                   const char** out);
/* Looks up a scalar fact such as "delta_recall@100_nprobe16". */
JPQ_API jpq_status jpq_report_fact(const jpq_report* report, const char* name,
                                   double* value);
JPQ_API void jpq_report_destroy(jpq_report* report);

#ifdef __cplusplus
}
#endif

#endif  /* JOINTPQ_JOINTPQ_H_ */
