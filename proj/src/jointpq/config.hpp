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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "jointpq/dataset.hpp"
#include "jointpq/index.hpp"
#include "jointpq/trainer.hpp"

namespace jointpq {

/// Everything a command needs: training knobs, paths, mode flags and the
/// synthetic data generator settings. Keys match the CLI long flags, e.g.
/// `steps`, `warm-steps`, `J`, `lambda`, `rotation`.
struct RunConfig {
  TrainConfig train;
  std::size_t nprobe = 16;
  std::vector<std::size_t> ks{100};
  std::vector<std::size_t> nprobes{16};
  std::size_t offline_rounds = 4;
  std::filesystem::path data;
  std::filesystem::path eval_data;
  std::filesystem::path index;
  std::filesystem::path model;
  std::filesystem::path log;
  BlobConfig blobs;

  /// Applies one `key=value` setting; unknown keys are parameter errors.
  void set(std::string_view key, std::string_view value);
  /// Reads a flat `key=value` file; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// Every key with its current value, one `key=value` per entry.
  std::vector<std::string> dump() const;
  static const std::vector<std::string>& keys();

  OfflineBuildConfig offline() const;
};

}  // namespace jointpq
