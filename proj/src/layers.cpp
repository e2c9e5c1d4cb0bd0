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

#include "bevbeam/layers.hpp"

#include <cmath>

#include "bevbeam/errors.hpp"
#include "bevbeam/model_config.hpp"

namespace bevbeam {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ContractError("model config: " + msg);
  };
  grid().validate();
  require(c_bev >= 4 && c_bev % 4 == 0, "c_bev must be a positive multiple of 4");
  require(cam_heads > 0 && c_bev % cam_heads == 0, "c_bev must be divisible by cam_heads");
  require(temporal_heads > 0 && c_bev % temporal_heads == 0,
          "c_bev must be divisible by temporal_heads");
  require(c_back >= 1, "c_back must be positive");
  require(camera_size >= 32 && camera_size % 32 == 0, "camera_size must be a multiple of 32");
  require(cam_layers >= 1, "cam_layers must be positive");
  require(temporal_layers >= 1, "temporal_layers must be positive");
  require(ffn_mult >= 1 && gps_hidden >= 1 && head_hidden >= 1, "hidden sizes must be positive");
  require(head_dropout >= 0.0 && head_dropout < 1.0, "head_dropout must lie in [0, 1)");
  require(beams >= 2, "beams must be at least 2");
  require(timesteps >= 1, "timesteps must be positive");
  require(lidar_channels == 1 || lidar_channels == 3, "lidar_channels must be 1 or 3");
}

std::vector<std::size_t> ModelConfig::backbone_widths() const {
  std::vector<std::size_t> w;
  for (int i = 4; i >= 0; --i) w.push_back(std::max<std::size_t>(1, c_back >> i));
  return w;
}

std::vector<std::size_t> ModelConfig::encoder_widths() const {
  return {c_bev / 4, c_bev / 2, c_bev};
}

namespace {

// [.., N, C] -> [.., H, N, dk]; a rank-2 input gains a leading unit axis.
template <class T>
Tensor<T> split_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t heads) {
  Shape s = x.shape();
  if (s.size() == 2) s.insert(s.begin(), 1);
  if (s.size() != 3) throw DimensionError("attention expects [B, N, C], got " + shape_str(x.shape()));
  const std::size_t b = s[0], n = s[1], c = s[2];
  if (c % heads != 0) throw DimensionError("attention width not divisible by head count");
  auto r = reshape(tape, x, {b, n, heads, c / heads});
  return permute(tape, r, {0, 2, 1, 3});
}

}  // namespace

template <class T>
Tensor<T> multi_head_attention(Tape<T>& tape, const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v, std::size_t heads,
                               std::vector<Array<double>>* probe) {
  if (k.shape() != v.shape()) {
    throw DimensionError("attention key/value mismatch: " + shape_str(k.shape()) + " vs " +
                         shape_str(v.shape()));
  }
  const std::size_t c = k.shape().back();
  if (q.shape().back() != c) {
    throw DimensionError("attention query/key width mismatch: " + shape_str(q.shape()) + " vs " +
                         shape_str(k.shape()));
  }
  const std::size_t dk = c / heads;
  auto qh = split_heads(tape, q, heads);
  auto kh = split_heads(tape, k, heads);
  auto vh = split_heads(tape, v, heads);
  auto scores = scale(tape, matmul(tape, qh, kh, true), static_cast<T>(1.0 / std::sqrt(double(dk))));
  auto attn = softmax(tape, scores, -1);
  if (probe) probe->push_back(attn.value().template cast<double>());
  auto out = matmul(tape, attn, vh);  // [B, H, Nq, dk]
  const std::size_t b = out.shape()[0], nq = out.shape()[2];
  return reshape(tape, permute(tape, out, {0, 2, 1, 3}), {b, nq, c});
}

template Tensor<float> multi_head_attention(Tape<float>&, const Tensor<float>&,
                                            const Tensor<float>&, const Tensor<float>&,
                                            std::size_t, std::vector<Array<double>>*);
template Tensor<double> multi_head_attention(Tape<double>&, const Tensor<double>&,
                                             const Tensor<double>&, const Tensor<double>&,
                                             std::size_t, std::vector<Array<double>>*);

}  // namespace bevbeam
