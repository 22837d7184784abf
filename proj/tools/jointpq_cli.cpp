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

// jointpq command line: generate, train, build-index, search, evaluate,
// compare. Talks to the library only through the C interface.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "jointpq/jointpq.h"

namespace {

class CommandError : public std::runtime_error {
 public:
  CommandError(jpq_status status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  jpq_status status() const noexcept { return status_; }

 private:
  jpq_status status_;
};

void check(jpq_status status, const char* doing) {
  if (status != JPQ_OK) {
    std::string msg = std::string(doing) + ": " + jpq_status_string(status);
    const std::string detail = jpq_last_error();
    if (!detail.empty()) msg += ": " + detail;
    throw CommandError(status, msg);
  }
}

// RAII owners for the C handles.
template <typename T, void (*Destroy)(T*)>
class Handle {
 public:
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Destroy(ptr_); }
  T* get() const { return ptr_; }
  T** out() { return &ptr_; }

 private:
  T* ptr_ = nullptr;
};

using Config = Handle<jpq_config, jpq_config_destroy>;
using Dataset = Handle<jpq_dataset, jpq_dataset_destroy>;
using Model = Handle<jpq_model, jpq_model_destroy>;
using Index = Handle<jpq_index, jpq_index_destroy>;
using Report = Handle<jpq_report, jpq_report_destroy>;

// Flags that map one-to-one onto config keys.
const char* const kValueKeys[] = {
    "steps", "warm-steps", "J", "K", "D", "d", "nprobe", "margin", "lr",
    "batch", "lambda", "rotation-period", "seed", "cold-start-stddev",
    "init-scale", "kmeans-iters", "offline-rounds", "k", "nprobes",
    "blob-clusters", "blob-items", "blob-queries", "blob-variance",
    "blob-train-pairs", "blob-eval-pairs", "blob-noise"};

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> values;
  bool no_rotation = false;
  bool cold_start = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file");
    app->add_option("--set", sets, "extra key=value override")->take_all();
    values.reserve(std::size(kValueKeys));
    for (const char* key : kValueKeys) {
      values.emplace_back(key, std::string());
      app->add_option(std::string("--") + key, values.back().second);
    }
    app->add_flag("--no-rotation", no_rotation, "disable the learned rotation");
    app->add_flag("--cold-start", cold_start,
                  "random centroids instead of the k-means warm start");
  }

  void apply(CLI::App* app, jpq_config* config) const {
    if (!config_file.empty()) check(jpq_config_load(config, config_file.c_str()), "config");
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw CommandError(JPQ_ERR_PARAMETER, "--set expects key=value, got " + s);
      }
      check(jpq_config_set(config, s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()),
            "config");
    }
    for (const auto& [key, value] : values) {
      if (app->count(std::string("--") + key) == 0) continue;
      check(jpq_config_set(config, key.c_str(), value.c_str()), key.c_str());
    }
    if (no_rotation) check(jpq_config_set(config, "rotation", "false"), "config");
    if (cold_start) check(jpq_config_set(config, "cold-start", "true"), "config");
  }
};

void save_index(const jpq_index* index, const std::string& path) {
  check(jpq_index_save(index, path.c_str()), "writing index");
  jpq_index_info info{};
  check(jpq_index_info_get(index, &info), "index");
  std::cerr << "wrote " << path << ": " << info.items << " items, d=" << info.dim
            << " J=" << info.coarse << " K=" << info.pq_centroids
            << " D=" << info.subspaces << '\n';
}

void print_report(jpq_report* report, const std::string& format, bool timings) {
  const char* text = nullptr;
  if (format == "json") {
    check(jpq_report_json(report, timings ? 1 : 0, &text), "report");
    std::cout << text << '\n';
  } else {
    check(jpq_report_text(report, timings ? 1 : 0, &text), "report");
    std::cout << text;
  }
}

void warn_malformed(const jpq_dataset* data, const std::string& path) {
  jpq_dataset_stats stats{};
  check(jpq_dataset_stats_get(data, &stats), "dataset");
  if (stats.malformed_lines > 0) {
    std::cerr << "warning: " << path << ": skipped " << stats.malformed_lines
              << " malformed line(s)\n";
  }
}

std::vector<float> parse_vector(const std::string& text) {
  std::vector<float> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stof(tok, &used));
      if (used != tok.size() && tok.find_first_not_of(" \t", used) != std::string::npos) {
        throw std::invalid_argument(tok);
      }
    } catch (const std::exception&) {
      throw CommandError(JPQ_ERR_PARAMETER, "bad vector component: '" + tok + "'");
    }
  }
  if (v.empty()) throw CommandError(JPQ_ERR_PARAMETER, "empty --vector");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jointpq: jointly trained IVF-PQ retrieval index"};
  app.require_subcommand(1);

  ConfigFlags flags_generate, flags_train, flags_build, flags_search, flags_eval,
      flags_compare;

  std::string out_train, out_eval;
  auto* generate = app.add_subcommand("generate", "write a synthetic blob dataset");
  flags_generate.attach(generate);
  generate->add_option("--out", out_train, "training pairs output")->required();
  generate->add_option("--eval-out", out_eval, "held-out pairs output")->required();

  std::string data_path, eval_path, index_path, model_path, log_path;
  auto* train = app.add_subcommand("train", "train the model and build the index");
  flags_train.attach(train);
  train->add_option("--data", data_path, "training pairs (query TAB item)")->required();
  train->add_option("--index", index_path, "index output")->required();
  train->add_option("--model", model_path, "model output");
  train->add_option("--log", log_path, "JSON-lines training log");

  bool offline = false;
  auto* build = app.add_subcommand("build-index", "encode a trained model's items");
  flags_build.attach(build);
  build->add_option("--model", model_path, "trained model")->required();
  build->add_option("--index", index_path, "index output")->required();
  build->add_flag("--offline", offline,
                  "learn codebooks on the frozen embeddings instead");

  std::string query_id, vector_text;
  std::size_t top_k = 10;
  auto* search = app.add_subcommand("search", "top-k items for one query");
  flags_search.attach(search);
  search->add_option("--index", index_path, "index file")->required();
  search->add_option("--model", model_path, "model holding the query tower");
  auto* qid = search->add_option("--query-id", query_id, "query id from training");
  auto* qvec = search->add_option("--vector", vector_text, "comma-separated floats");
  qid->excludes(qvec);
  search->add_option("--top", top_k, "results to print")->check(CLI::PositiveNumber);

  std::string format = "text";
  auto* evaluate = app.add_subcommand("evaluate", "p@k and r@k on held-out pairs");
  flags_eval.attach(evaluate);
  evaluate->add_option("--index", index_path, "index file")->required();
  evaluate->add_option("--model", model_path, "model holding the query tower")->required();
  evaluate->add_option("--eval-data", eval_path, "held-out pairs")->required();
  evaluate->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));

  bool no_timings = false;
  auto* cmp = app.add_subcommand("compare", "joint training versus offline indexing");
  flags_compare.attach(cmp);
  cmp->add_option("--data", data_path, "training pairs; blobs are generated if absent");
  cmp->add_option("--eval-data", eval_path, "held-out pairs");
  cmp->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
  cmp->add_flag("--no-timings", no_timings, "leave build times out of the report");

  CLI11_PARSE(app, argc, argv);

  try {
    Config config;
    check(jpq_config_create(config.out()), "config");

    if (*generate) {
      flags_generate.apply(generate, config.get());
      Dataset tr, ev;
      check(jpq_dataset_generate_blobs(config.get(), tr.out(), ev.out()), "generate");
      check(jpq_dataset_save(tr.get(), out_train.c_str()), "writing training pairs");
      check(jpq_dataset_save(ev.get(), out_eval.c_str()), "writing eval pairs");
      jpq_dataset_stats s{};
      check(jpq_dataset_stats_get(tr.get(), &s), "dataset");
      std::cerr << "wrote " << s.pairs << " training pairs (" << s.queries
                << " queries, " << s.items << " items)\n";
    } else if (*train) {
      flags_train.apply(train, config.get());
      Dataset data;
      check(jpq_dataset_load(data_path.c_str(), data.out()), "reading data");
      warn_malformed(data.get(), data_path);
      Model model;
      Index index;
      check(jpq_train(config.get(), data.get(), log_path.empty() ? nullptr : log_path.c_str(),
                      model.out(), index.out()),
            "training");
      if (!model_path.empty()) {
        check(jpq_model_save(model.get(), model_path.c_str()), "writing model");
      }
      save_index(index.get(), index_path);
    } else if (*build) {
      flags_build.apply(build, config.get());
      Model model;
      check(jpq_model_load(model_path.c_str(), model.out()), "reading model");
      Index index;
      if (offline) {
        jpq_model_info info{};
        check(jpq_model_info_get(model.get(), &info), "model");
        check(jpq_config_set(config.get(), "d", std::to_string(info.dim).c_str()), "config");
        check(jpq_model_offline_index(model.get(), config.get(), index.out()),
              "offline build");
      } else {
        check(jpq_model_build_index(model.get(), index.out()), "build");
      }
      save_index(index.get(), index_path);
    } else if (*search) {
      flags_search.apply(search, config.get());
      Index index;
      check(jpq_index_load(index_path.c_str(), index.out()), "reading index");
      jpq_index_info info{};
      check(jpq_index_info_get(index.get(), &info), "index");
      std::vector<float> q;
      if (!vector_text.empty()) {
        q = parse_vector(vector_text);
      } else if (!query_id.empty()) {
        if (model_path.empty()) {
          throw CommandError(JPQ_ERR_PARAMETER, "--query-id needs --model");
        }
        Model model;
        check(jpq_model_load(model_path.c_str(), model.out()), "reading model");
        q.resize(info.dim);
        check(jpq_model_query_embedding(model.get(), query_id.c_str(), q.data(), q.size()),
              "query lookup");
      } else {
        throw CommandError(JPQ_ERR_PARAMETER, "give --query-id or --vector");
      }
      char nprobe_text[32] = {0};
      check(jpq_config_get(config.get(), "nprobe", nprobe_text, sizeof nprobe_text, nullptr),
            "config");
      const std::size_t nprobe = std::stoul(nprobe_text);
      if (top_k > info.items) {
        std::cerr << "warning: --top " << top_k << " exceeds the " << info.items
                  << " indexed items\n";
      }
      std::vector<jpq_hit> hits(std::min<std::size_t>(top_k, info.items));
      std::size_t count = 0;
      check(jpq_index_search(index.get(), q.data(), q.size(), top_k, nprobe, hits.data(),
                             hits.size(), &count),
            "search");
      for (std::size_t r = 0; r < count; ++r) {
        const char* id = nullptr;
        check(jpq_index_item_id(index.get(), hits[r].item, &id), "search");
        std::printf("%zu\t%s\t%.6f\n", r + 1, id, hits[r].score);
      }
    } else if (*evaluate) {
      flags_eval.apply(evaluate, config.get());
      Index index;
      check(jpq_index_load(index_path.c_str(), index.out()), "reading index");
      Model model;
      check(jpq_model_load(model_path.c_str(), model.out()), "reading model");
      Dataset eval;
      check(jpq_dataset_load(eval_path.c_str(), eval.out()), "reading eval data");
      warn_malformed(eval.get(), eval_path);
      Report report;
      check(jpq_evaluate(index.get(), model.get(), eval.get(), config.get(), report.out()),
            "evaluate");
      print_report(report.get(), format, true);
    } else if (*cmp) {
      flags_compare.apply(cmp, config.get());
      Dataset tr, ev;
      if (data_path.empty()) {
        check(jpq_dataset_generate_blobs(config.get(), tr.out(), ev.out()), "generate");
      } else {
        if (eval_path.empty()) {
          throw CommandError(JPQ_ERR_PARAMETER, "--data needs --eval-data");
        }
        check(jpq_dataset_load(data_path.c_str(), tr.out()), "reading data");
        warn_malformed(tr.get(), data_path);
        check(jpq_dataset_load(eval_path.c_str(), ev.out()), "reading eval data");
        warn_malformed(ev.get(), eval_path);
      }
      Report report;
      check(jpq_compare(config.get(), tr.get(), ev.get(), report.out()), "compare");
      print_report(report.get(), format, !no_timings);
    }
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.status());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return JPQ_ERR_INTERNAL;
  }
  return 0;
}
