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

// Focal loss, AdamW, the cosine schedule, checkpoints and the training loop.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bevbeam/data.hpp"
#include "bevbeam/fusion_model.hpp"
#include "bevbeam/metrics.hpp"

namespace bevbeam {

struct FocalLossConfig {
  double gamma = 2.0;
  std::vector<double> alpha;  // per-class weights; empty means all ones

  void validate(std::size_t beams) const;
};

/// mean_b -alpha[m] (1 - p_m)^gamma log(max(p_m, 1e-12)) at the true class m
/// of each row of probs [B, M].
template <class T>
Tensor<T> focal_loss(Tape<T>& tape, const Tensor<T>& probs, const std::vector<std::size_t>& labels,
                     const FocalLossConfig& cfg);

/// alpha_m = N / (M (count_m + 1)), rescaled to mean 1.
std::vector<double> class_weights(const std::vector<std::size_t>& labels, std::size_t beams);

struct OptimizerConfig {
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 150;
  std::size_t batch_size = 4;
  double clip_norm = 5.0;  // <= 0 disables clipping

  void validate() const;
};

/// Moment buffers aligned with a parameter list.
template <class T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Array<T>> m;
  std::vector<Array<T>> v;
};

using NamedParams = std::vector<std::pair<std::string, Tensor<float>>>;

/// One AdamW update: p <- p - lr_t*wd*p, then the bias-corrected Adam step.
/// Parameters without a gradient are treated as having a zero gradient.
/// Throws NumericError naming the parameter before touching any value when a
/// gradient is not finite.
template <class T>
void adamw_step(const std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state,
                const OptimizerConfig& cfg, double lr_t);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
template <class T>
double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<T>>>& params,
                      double max_norm);

/// 0.5 lr (1 + cos(pi epoch / epochs)).
double cosine_lr(std::size_t epoch, const OptimizerConfig& cfg);

// ---------------------------------------------------------------------------
// Model config text form and checkpoints

/// "key=value" lines in a fixed key order.
std::string model_config_text(const ModelConfig& cfg);
/// Parses model_config_text output. Unknown keys and bad values throw
/// ConfigError; missing keys keep their defaults.
ModelConfig parse_model_config(const std::string& text);
/// FNV-1a over model_config_text.
std::uint64_t model_config_hash(const ModelConfig& cfg);
/// Throws MismatchError naming the first key whose values differ.
void require_same_config(const ModelConfig& expected, const ModelConfig& actual);

struct TrainState {
  AdamState<float> adam;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // completed epochs
  double best_val_dba = -1.0;
};

/// Checkpoint directory: config.txt, state.txt, params/<name>.bvt,
/// buffers/<name>.bvt and optimizer/{m,v}/<name>.bvt.
void save_checkpoint(const std::filesystem::path& dir, ModelParams<float>& params,
                     const TrainState& state);
ModelConfig read_checkpoint_config(const std::filesystem::path& dir);
/// Loads into params built for `expected`. A config difference throws
/// MismatchError; a missing or mis-shaped tensor throws MismatchError naming it.
TrainState load_checkpoint(const std::filesystem::path& dir, ModelParams<float>& params);

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  ModelConfig model;
  OptimizerConfig optim;
  double gamma = 2.0;
  bool use_class_weights = true;
  std::uint64_t seed = 0;
  double flip_prob = 0.5;
  bool photometric = true;
  DbaConfig dba;
  ForwardOptions forward;  // pathway switches for retrain-style ablations
  std::size_t eval_batch = 8;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path log_path;        // empty: no CSV log
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_dba = 0.0;
  double val_dba = 0.0;  // NaN without a validation split
  double wall_time_s = 0.0;
};

/// Loads sample i of the dataset (pre-augmentation).
using SequenceLoader = std::function<SampleSequence(std::size_t)>;

class Trainer {
 public:
  Trainer(TrainConfig cfg, SequenceLoader load, std::vector<std::size_t> train_indices,
          std::vector<std::size_t> train_labels, std::vector<std::size_t> val_indices = {});

  ModelParams<float>& params() { return params_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

  /// Runs one epoch at the schedule's learning rate, evaluates the validation
  /// split and writes the checkpoint when validation DBA improves.
  EpochMetrics run_epoch();
  /// Runs the remaining epochs; `on_epoch` sees each epoch's metrics.
  std::vector<EpochMetrics> fit(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  /// Validation DBA of the current parameters.
  double evaluate(const std::vector<std::size_t>& indices);

 private:
  PreparedSample training_sample(std::size_t index, std::mt19937_64& rng) const;

  TrainConfig cfg_;
  SequenceLoader load_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> val_;
  FocalLossConfig loss_;
  ModelParams<float> params_;
  NamedParams named_;
  TrainState state_;
  double elapsed_s_ = 0.0;
};

// ---------------------------------------------------------------------------
// GPS-only baseline

/// Two-layer MLP over the calibrated t=1,2 readings scaled by the grid extent.
struct GpsBaseline {
  LinearLayer<float> fc1, fc2, fc3;
  double extent = 50.0;

  GpsBaseline(std::size_t hidden, std::size_t beams, double extent, std::uint64_t seed);
  Tensor<float> forward(Tape<float>& tape, const Array<float>& gps) const;  // gps [B, 4] metres
  NamedParams named_parameters();
};

struct GpsBaselineConfig {
  std::size_t hidden = 64;
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double lr = 3e-3;
  double gamma = 2.0;
  std::uint64_t seed = 0;
};

/// Trains on rows of gps [N, 4] (t1 dx, t1 dy, t2 dx, t2 dy) and returns the model.
GpsBaseline train_gps_baseline(const Array<float>& gps, const std::vector<std::size_t>& labels,
                               std::size_t beams, double extent, const GpsBaselineConfig& cfg);
/// Probability rows [N, M].
Array<float> gps_baseline_probs(const GpsBaseline& model, const Array<float>& gps);

}  // namespace bevbeam
