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

// Conversion of raw sample sequences into model-ready arrays, batching, and
// the training augmentations.

#include <random>
#include <string>
#include <vector>

#include "bevbeam/data.hpp"
#include "bevbeam/fusion_model.hpp"

namespace bevbeam {

/// One sequence after preprocessing. Per-frame arrays carry a leading time axis.
struct PreparedSample {
  std::string seq_id;
  std::size_t scenario_id = 0;
  std::size_t label = 0;
  std::size_t beams = 0;
  Array<float> camera;    // [T, 3, S, S]
  Array<float> lidar;     // [T, Cl, G, G]
  Array<float> radar;     // [T, 2, G, G]
  Array<float> gps_mask;  // [T, 1, G, G], t >= 3 holds the t=2 reading
  Array<float> gps;       // [2, 2] calibrated readings at t=1,2 (metres)

  bool operator==(const PreparedSample&) const = default;
};

/// Runs every preprocessing step for the model configuration.
PreparedSample prepare_sample(const SampleSequence& s, const ModelConfig& cfg,
                              const CameraNormConfig& norm = {});

/// Stacks samples into a batch; the MLP pathway receives the t=2 reading.
ModelBatch collate(const std::vector<PreparedSample>& samples);

/// Mirrors every BEV input and camera frame along the width axis, negates
/// the calibrated GPS dx and maps the label m to M-1-m.
PreparedSample flip_augment(const PreparedSample& s);

struct PhotometricFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

/// Brightness, then contrast about the mean gray level, then saturation about
/// the per-pixel gray level; clamped to [0, 255] after each step and rounded.
CameraFrame apply_photometric(const CameraFrame& frame, const PhotometricFactors& f);

/// Samples each factor from U[0.8, 1.2] and applies it.
CameraFrame photometric_augment(const CameraFrame& frame, std::mt19937_64& rng);

}  // namespace bevbeam
