// Copyright 2026 The bevbeam Authors
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

// Flat run configuration shared by every CLI command. The text form is one
// "key = value" per line; '#' starts a comment.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bevbeam/data.hpp"
#include "bevbeam/metrics.hpp"
#include "bevbeam/training.hpp"

namespace bevbeam {

struct RunConfig {
  ModelConfig model;
  OptimizerConfig optim;
  double gamma = 2.0;
  bool class_weights = true;
  double flip_prob = 0.5;
  bool photometric = true;
  std::size_t dba_k = 3;
  double dba_delta = 5.0;
  std::size_t eval_batch = 8;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  std::string ablation = "full";  // pathway switched off in training and evaluation

  // synthetic generation
  std::size_t sequences = 2000;
  std::size_t scenarios = 3;
  double gps_sigma = 1.0;
  std::size_t image_size = 256;
  double fov_deg = 90.0;

  std::string data;
  std::string out;
  std::string checkpoint;

  /// Keys assigned through set().
  std::set<std::string> explicit_keys;

  /// Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Range checks on every field; throws ConfigError naming the key.
  void validate() const;

  std::string to_text() const;
  /// Applies every line of `text` through set().
  void merge_text(const std::string& text, const std::string& origin = "config");

  TrainConfig train_config() const;
  SyntheticScenarioConfig synthetic_config() const;
  DbaConfig dba() const { return {dba_k, dba_delta}; }
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Every key with its default and a one-line description, in file order.
std::vector<ConfigKeyInfo> config_keys();

RunConfig load_run_config(const std::string& path);

/// Caps linear-algebra threads at BEVBEAM_THREADS when that variable is a
/// positive integer. Returns the applied count, or 0 when unset.
int apply_thread_limit();

}  // namespace bevbeam
