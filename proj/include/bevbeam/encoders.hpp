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

// Modality-specific encoders that map every sensor onto the shared BEV grid.

#include <random>
#include <string>
#include <vector>

#include "bevbeam/layers.hpp"
#include "bevbeam/model_config.hpp"

namespace bevbeam {

/// Five stride-2 stages (conv, BN, ReLU, then one residual 3x3 conv block),
/// giving 32x spatial downsampling.
template <class T>
struct CameraBackbone {
  struct Stage {
    Conv2dLayer<T> down;
    BatchNorm2d<T> down_bn;
    Conv2dLayer<T> res;
    BatchNorm2d<T> res_bn;
  };
  std::vector<Stage> stages;
  std::size_t input_size = 256;

  CameraBackbone() = default;
  CameraBackbone(const ModelConfig& cfg, std::mt19937_64& rng);
  std::size_t out_channels() const { return stages.back().down.weight.shape()[0]; }
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <class T>
struct CameraToBevParams {
  struct Layer {
    LinearLayer<T> key;    // W_K [C_bev, C_back]
    LinearLayer<T> value;  // W_V [C_bev, C_back]
    LinearLayer<T> out;    // W_O [C_bev, C_bev]
    LayerNormLayer<T> norm;
  };
  Tensor<T> query_embed;  // E_bev [H*W, C_bev]
  Tensor<T> pos_embed;    // P_bev [H*W, C_bev]
  std::vector<Layer> layers;
  std::size_t heads = 4;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  CameraToBevParams() = default;
  CameraToBevParams(const ModelConfig& cfg, std::mt19937_64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

/// Three conv3x3-BN-ReLU blocks, Cin -> C/4 -> C/2 -> C.
template <class T>
struct ConvBevEncoder {
  std::vector<Conv2dLayer<T>> convs;
  std::vector<BatchNorm2d<T>> norms;

  ConvBevEncoder() = default;
  ConvBevEncoder(std::size_t in_channels, const ModelConfig& cfg, std::mt19937_64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <class T>
struct GpsMlpParams {
  LinearLayer<T> fc1;  // W_1 [h1, 2]
  LayerNormLayer<T> ln1;
  LinearLayer<T> fc2;  // W_2 [C_bev, h1]
  LayerNormLayer<T> ln2;

  GpsMlpParams() = default;
  GpsMlpParams(const ModelConfig& cfg, std::mt19937_64& rng);
  void visit(const std::string& prefix, ParamVisitor<T>& v);
};

/// img [B, 3, S, S] -> [B, C_back, S/32, S/32].
template <class T>
Tensor<T> camera_backbone(Tape<T>& tape, CameraBackbone<T>& p, const Tensor<T>& img, Mode mode);

/// feat [B, C_back, h, w] -> [B, C_bev, H_bev, W_bev]. Attention weights of
/// every layer are appended to `probe` when it is non-null.
template <class T>
Tensor<T> camera_to_bev(Tape<T>& tape, const CameraToBevParams<T>& p, const Tensor<T>& feat,
                        std::vector<Array<double>>* probe = nullptr);

/// x [B, Cin, H, W] -> [B, C_bev, H, W].
template <class T>
Tensor<T> conv_bev_encoder(Tape<T>& tape, ConvBevEncoder<T>& p, const Tensor<T>& x, Mode mode);

/// g [B, 2] -> [B, C_bev].
template <class T>
Tensor<T> gps_mlp(Tape<T>& tape, const GpsMlpParams<T>& p, const Tensor<T>& g);

}  // namespace bevbeam
