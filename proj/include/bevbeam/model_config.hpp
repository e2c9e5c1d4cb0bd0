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

// Architecture hyperparameters shared by the encoders, the fusion model and
// the checkpoint format.

#include <cstddef>
#include <string>
#include <vector>

#include "bevbeam/preprocess.hpp"

namespace bevbeam {

struct ModelConfig {
  std::size_t grid_cells = 128;  // H_bev = W_bev
  double grid_extent = 50.0;     // metres
  std::size_t c_bev = 256;
  std::size_t c_back = 512;
  std::size_t camera_size = 256;  // square camera input, multiple of 32
  std::size_t cam_layers = 3;
  std::size_t cam_heads = 4;
  std::size_t temporal_layers = 4;
  std::size_t temporal_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t gps_hidden = 128;
  std::size_t head_hidden = 512;
  double head_dropout = 0.1;
  std::size_t beams = 64;
  std::size_t timesteps = 5;
  std::size_t lidar_channels = 1;  // 1 (height) or 3 (height, intensity, density)

  void validate() const;

  BevGridSpec grid() const { return {grid_extent, grid_cells, grid_cells}; }
  std::size_t camera_tokens() const { return (camera_size / 32) * (camera_size / 32); }
  /// Backbone stage widths: c_back/16, /8, /4, /2, /1 (at least 1).
  std::vector<std::size_t> backbone_widths() const;
  /// Conv BEV encoder widths: c_bev/4, c_bev/2, c_bev.
  std::vector<std::size_t> encoder_widths() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace bevbeam
