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

// Distance-based accuracy, top-K accuracy, confusion matrices, batched model
// inference and the ablation harness.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bevbeam/fusion_model.hpp"
#include "bevbeam/pipeline.hpp"

namespace bevbeam {

struct DbaConfig {
  std::size_t k = 3;
  double delta = 5.0;
  void validate() const;
};

/// Beam indices ordered from most to least likely.
using Ranking = std::vector<std::size_t>;

/// Y_1..Y_K: Y_k = 1 - mean_n min_{j<=k} min(|m_j - m*| / delta, 1).
std::vector<double> dba_curve(const std::vector<Ranking>& predictions,
                              const std::vector<std::size_t>& labels, const DbaConfig& cfg);

/// Mean of dba_curve.
double dba_score(const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
                 const DbaConfig& cfg = {});

/// Fraction of samples whose label is among the first k predictions.
double topk_accuracy(const std::vector<Ranking>& predictions,
                     const std::vector<std::size_t>& labels, std::size_t k);

/// counts[true * beams + predicted] over top-1 predictions.
struct ConfusionMatrix {
  std::size_t beams = 0;
  std::vector<std::size_t> counts;
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * beams + predicted];
  }
};

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& top1,
                                 const std::vector<std::size_t>& labels, std::size_t beams);

struct ScopeMetrics {
  std::size_t samples = 0;
  double dba = 0.0;
  std::vector<double> y;     // Y_1..Y_K
  std::vector<double> topk;  // top-1..top-3 accuracy
};

struct DbaReport {
  std::string mode = "full";
  ScopeMetrics overall;
  std::map<std::size_t, ScopeMetrics> per_scenario;
  ConfusionMatrix confusion;
};

DbaReport build_report(const std::vector<Ranking>& predictions,
                       const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& scenarios, std::size_t beams,
                       const DbaConfig& cfg = {}, std::string mode = "full");

/// Expected DBA of a predictor that ranks K distinct beams uniformly at
/// random, averaged over the given labels (closed form).
double random_baseline_dba(const std::vector<std::size_t>& labels, std::size_t beams,
                           const DbaConfig& cfg = {});

/// Top-k beams of one probability row, ties broken toward lower indices.
Ranking rank_beams(const float* probs, std::size_t beams, std::size_t k);

// ---------------------------------------------------------------------------
// Inference and ablations

using SampleLoader = std::function<PreparedSample(std::size_t)>;

struct InferenceResult {
  std::vector<std::string> seq_ids;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> scenarios;
  Array<float> probs;  // [N, M]

  std::vector<Ranking> rankings(std::size_t k) const;
};

/// Eval-mode forward passes over `indices` in batches of `batch_size`.
InferenceResult run_inference(ModelParams<float>& params, const SampleLoader& load,
                              const std::vector<std::size_t>& indices, ForwardOptions opts,
                              std::size_t batch_size = 8);

enum class AblationMode {
  full,
  drop_camera,
  drop_lidar,
  drop_radar,
  drop_gps,
  mean_pool,
  single_frame,
  gps_spatial_only,
  gps_mlp_only
};

/// Throws ContractError on an unknown name.
AblationMode parse_ablation(const std::string& name);
std::string ablation_name(AblationMode mode);
const std::vector<AblationMode>& all_ablations();
/// Forward options with the named pathway disabled.
ForwardOptions ablation_options(AblationMode mode);

DbaReport ablation_run(ModelParams<float>& params, const SampleLoader& load,
                       const std::vector<std::size_t>& indices, AblationMode mode,
                       const DbaConfig& cfg = {}, std::size_t batch_size = 8);

// ---------------------------------------------------------------------------
// Files

/// Report CSV: mode,scope,samples,dba,y1..yK,top1,top2,top3 (scope is
/// "overall" or "scenario_<id>").
void write_report_csv(const std::filesystem::path& path, const DbaReport& r);
/// Confusion CSV: header "true\\pred,0,..,M-1", one row per true beam.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& c);

struct PredictionRecord {
  std::string seq_id;
  Ranking ranks;  // at least 3
  std::size_t label = 0;
};

/// Prediction file for external methods: seq_id,rank1,rank2,rank3,label.
std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path);
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRecord>& rows);

/// Heatmap of the confusion matrix (binary PPM, log-scaled intensity).
void write_confusion_ppm(const std::filesystem::path& path, const ConfusionMatrix& c,
                         std::size_t cell_px = 8);
/// Line plot of one or more series over a shared x axis (binary PPM).
void write_line_plot_ppm(const std::filesystem::path& path,
                         const std::vector<std::vector<double>>& series, std::size_t width = 480,
                         std::size_t height = 320);

}  // namespace bevbeam
