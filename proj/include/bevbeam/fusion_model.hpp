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

// BEV fusion, temporal transformer, gated GPS injection, classification head
// and the end-to-end forward pass.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bevbeam/encoders.hpp"

namespace bevbeam {

template <class T>
struct FusionParams {
  struct ResidualBlock {
    Conv2dLayer<T> conv1;
    BatchNorm2d<T> bn1;
    Conv2dLayer<T> conv2;
    BatchNorm2d<T> bn2;
  };
  Conv2dLayer<T> reduce;  // 1x1, 4*C_bev -> C_bev
  BatchNorm2d<T> reduce_bn;
  std::vector<ResidualBlock> blocks;

  FusionParams() = default;
  FusionParams(const ModelConfig& cfg, std::mt19937_64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <class T>
struct TemporalParams {
  struct Block {
    LayerNormLayer<T> ln1;
    LinearLayer<T> wq, wk, wv, wo;
    LayerNormLayer<T> ln2;
    LinearLayer<T> ff1, ff2;
  };
  Tensor<T> pos_embed;  // [T, C_bev]
  std::vector<Block> blocks;
  std::size_t heads = 4;

  TemporalParams() = default;
  TemporalParams(const ModelConfig& cfg, std::mt19937_64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <class T>
struct HeadParams {
  LinearLayer<T> fc1;
  LinearLayer<T> fc2;
  double dropout_rate = 0.1;

  HeadParams() = default;
  HeadParams(const ModelConfig& cfg, std::mt19937_64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

/// Complete learnable parameter store.
template <class T>
struct ModelParams {
  ModelConfig config;
  CameraBackbone<T> backbone;
  CameraToBevParams<T> camera_bev;
  ConvBevEncoder<T> lidar_encoder;
  ConvBevEncoder<T> radar_encoder;
  ConvBevEncoder<T> gps_encoder;
  GpsMlpParams<T> gps_mlp;
  FusionParams<T> fusion;
  TemporalParams<T> temporal;
  Tensor<T> gate;  // s, shape [1], starts at 0
  HeadParams<T> head;

  ModelParams() = default;
  ModelParams(const ModelConfig& cfg, std::uint64_t seed);

  void visit(ParamVisitor<T>& v);
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters();
  std::vector<std::pair<std::string, Array<T>*>> named_buffers();
  std::size_t parameter_count();
  void zero_grad();
};

enum class TemporalMode { transformer, mean_pool, single_frame };

struct ForwardOptions {
  Mode mode = Mode::eval;
  bool use_camera = true;
  bool use_lidar = true;
  bool use_radar = true;
  bool use_gps_spatial = true;
  bool use_gps_mlp = true;
  TemporalMode temporal = TemporalMode::transformer;
  std::mt19937_64* rng = nullptr;  // required for dropout in train mode
  AttentionProbe* probe = nullptr;
};

/// Model-ready batch. Per-frame arrays are [B, T, C, H, W]; `gps` holds the
/// calibrated reading fed to the MLP pathway, [B, 2]. Arrays for disabled
/// modalities may be left empty.
struct ModelBatch {
  std::size_t batch = 0;
  Array<float> camera;    // [B, T, 3, S, S]
  Array<float> lidar;     // [B, T, Cl, H, W]
  Array<float> radar;     // [B, T, 2, H, W]
  Array<float> gps_mask;  // [B, T, 1, H, W]
  Array<float> gps;       // [B, 2]
  std::vector<std::size_t> labels;
};

template <class T>
struct ForwardResult {
  Tensor<T> logits;   // [B, M]
  Tensor<T> probs;    // [B, M]
  Tensor<T> z_final;  // [B, C_bev]
  Tensor<T> z_aug;    // [B, C_bev]
  Tensor<T> h_gps;    // [B, C_bev], undefined when the MLP pathway is off
};

/// Channel concat of four BEV maps, 1x1 reduction and two residual blocks.
/// Undefined inputs are replaced by zero maps.
template <class T>
Tensor<T> fuse_bev(Tape<T>& tape, FusionParams<T>& p, const Tensor<T>& cam, const Tensor<T>& lid,
                   const Tensor<T>& rad, const Tensor<T>& gps, Mode mode);

/// Global average pooling of fused maps [B*T, C, H, W] (row b*T + t).
template <class T>
Tensor<T> spatial_pool(Tape<T>& tape, const Tensor<T>& fused, std::size_t batch);

/// z [B, T', C] -> [B, C]. `first_step` selects the positional embedding rows.
template <class T>
Tensor<T> temporal_encode(Tape<T>& tape, const TemporalParams<T>& p, const Tensor<T>& z,
                          std::size_t first_step = 0, std::vector<Array<double>>* probe = nullptr);

template <class T>
Tensor<T> gps_inject(Tape<T>& tape, const Tensor<T>& z_final, const Tensor<T>& h_gps,
                     const Tensor<T>& gate);

/// Returns {logits, probs}.
template <class T>
std::pair<Tensor<T>, Tensor<T>> classify_head(Tape<T>& tape, const HeadParams<T>& p,
                                              const Tensor<T>& z, Mode mode,
                                              std::mt19937_64* rng);

template <class T>
ForwardResult<T> forward_full(Tape<T>& tape, ModelParams<T>& params, const ModelBatch& batch,
                              const ForwardOptions& opts);

}  // namespace bevbeam
