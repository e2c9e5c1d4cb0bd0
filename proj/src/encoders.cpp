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

#include "bevbeam/encoders.hpp"

#include "bevbeam/errors.hpp"

namespace bevbeam {

template <class T>
CameraBackbone<T>::CameraBackbone(const ModelConfig& cfg, std::mt19937_64& rng)
    : input_size(cfg.camera_size) {
  std::size_t cin = 3;
  for (std::size_t w : cfg.backbone_widths()) {
    Stage s;
    s.down = Conv2dLayer<T>(cin, w, 3, {2, 1}, rng);
    s.down_bn = BatchNorm2d<T>(w);
    s.res = Conv2dLayer<T>(w, w, 3, {1, 1}, rng);
    s.res_bn = BatchNorm2d<T>(w);
    stages.push_back(std::move(s));
    cin = w;
  }
}

template <class T>
void CameraBackbone<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = prefix + ".stage" + std::to_string(i);
    stages[i].down.visit(p + ".down", v);
    stages[i].down_bn.visit(p + ".down_bn", v);
    stages[i].res.visit(p + ".res", v);
    stages[i].res_bn.visit(p + ".res_bn", v);
  }
}

template <class T>
CameraToBevParams<T>::CameraToBevParams(const ModelConfig& cfg, std::mt19937_64& rng)
    : heads(cfg.cam_heads), grid_h(cfg.grid_cells), grid_w(cfg.grid_cells) {
  const std::size_t n = grid_h * grid_w;
  const std::size_t c = cfg.c_bev;
  query_embed = parameter(init::normal<T>({n, c}, 0.5, rng));
  pos_embed = parameter(init::normal<T>({n, c}, 0.5, rng));
  const std::size_t c_back = cfg.backbone_widths().back();
  for (std::size_t i = 0; i < cfg.cam_layers; ++i) {
    Layer l;
    l.key = LinearLayer<T>(c_back, c, false, rng);
    l.value = LinearLayer<T>(c_back, c, false, rng);
    l.out = LinearLayer<T>(c, c, false, rng);
    l.norm = LayerNormLayer<T>(c);
    layers.push_back(std::move(l));
  }
}

template <class T>
void CameraToBevParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  v.param(prefix + ".query_embed", query_embed);
  v.param(prefix + ".pos_embed", pos_embed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    layers[i].key.visit(p + ".key", v);
    layers[i].value.visit(p + ".value", v);
    layers[i].out.visit(p + ".out", v);
    layers[i].norm.visit(p + ".norm", v);
  }
}

template <class T>
ConvBevEncoder<T>::ConvBevEncoder(std::size_t in_channels, const ModelConfig& cfg,
                                  std::mt19937_64& rng) {
  std::size_t cin = in_channels;
  for (std::size_t w : cfg.encoder_widths()) {
    convs.emplace_back(cin, w, 3, Conv2dOptions{1, 1}, rng);
    norms.emplace_back(w);
    cin = w;
  }
}

template <class T>
void ConvBevEncoder<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    convs[i].visit(prefix + ".block" + std::to_string(i) + ".conv", v);
    norms[i].visit(prefix + ".block" + std::to_string(i) + ".bn", v);
  }
}

template <class T>
GpsMlpParams<T>::GpsMlpParams(const ModelConfig& cfg, std::mt19937_64& rng)
    : fc1(2, cfg.gps_hidden, true, rng),
      ln1(cfg.gps_hidden),
      fc2(cfg.gps_hidden, cfg.c_bev, true, rng),
      ln2(cfg.c_bev) {}

template <class T>
void GpsMlpParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  fc1.visit(prefix + ".fc1", v);
  ln1.visit(prefix + ".ln1", v);
  fc2.visit(prefix + ".fc2", v);
  ln2.visit(prefix + ".ln2", v);
}

template <class T>
Tensor<T> camera_backbone(Tape<T>& tape, CameraBackbone<T>& p, const Tensor<T>& img, Mode mode) {
  const Shape& s = img.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != p.input_size || s[3] != p.input_size) {
    throw DimensionError("camera_backbone expects [B, 3, " + std::to_string(p.input_size) + ", " +
                         std::to_string(p.input_size) + "], got " + shape_str(s));
  }
  Tensor<T> x = img;
  for (auto& st : p.stages) {
    x = relu(tape, st.down_bn(tape, st.down(tape, x), mode));
    x = relu(tape, add(tape, x, st.res_bn(tape, st.res(tape, x), mode)));
  }
  return x;
}

template <class T>
Tensor<T> camera_to_bev(Tape<T>& tape, const CameraToBevParams<T>& p, const Tensor<T>& feat,
                        std::vector<Array<double>>* probe) {
  const Shape& s = feat.shape();
  if (s.size() != 4) throw DimensionError("camera_to_bev expects [B, C, h, w], got " + shape_str(s));
  const std::size_t b = s[0], c_back = s[1], tokens = s[2] * s[3];
  const std::size_t c = p.query_embed.shape()[1];
  auto f = permute(tape, reshape(tape, feat, {b, c_back, tokens}), {0, 2, 1});  // [B, 64, C_back]
  Tensor<T> q = add(tape, p.query_embed, p.pos_embed);  // [N, C], shared across the batch
  for (const auto& l : p.layers) {
    auto k = l.key(tape, f);
    auto v = l.value(tape, f);
    auto z = l.out(tape, multi_head_attention(tape, q, k, v, p.heads, probe));
    q = l.norm(tape, add(tape, z, q));
  }
  auto out = permute(tape, q, {0, 2, 1});  // [B, C, N]
  return reshape(tape, out, {b, c, p.grid_h, p.grid_w});
}

template <class T>
Tensor<T> conv_bev_encoder(Tape<T>& tape, ConvBevEncoder<T>& p, const Tensor<T>& x, Mode mode) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != p.convs.front().weight.shape()[1]) {
    throw DimensionError("conv_bev_encoder expects [B, " +
                         std::to_string(p.convs.front().weight.shape()[1]) + ", H, W], got " +
                         shape_str(s));
  }
  Tensor<T> y = x;
  for (std::size_t i = 0; i < p.convs.size(); ++i) {
    y = relu(tape, p.norms[i](tape, p.convs[i](tape, y), mode));
  }
  return y;
}

template <class T>
Tensor<T> gps_mlp(Tape<T>& tape, const GpsMlpParams<T>& p, const Tensor<T>& g) {
  if (g.ndim() != 2 || g.shape()[1] != 2) {
    throw DimensionError("gps_mlp expects [B, 2], got " + shape_str(g.shape()));
  }
  auto h = relu(tape, p.ln1(tape, p.fc1(tape, g)));
  return p.ln2(tape, p.fc2(tape, h));
}

#define BEVBEAM_INSTANTIATE_ENCODERS(T)                                                        \
  template struct CameraBackbone<T>;                                                           \
  template struct CameraToBevParams<T>;                                                        \
  template struct ConvBevEncoder<T>;                                                           \
  template struct GpsMlpParams<T>;                                                             \
  template Tensor<T> camera_backbone(Tape<T>&, CameraBackbone<T>&, const Tensor<T>&, Mode);    \
  template Tensor<T> camera_to_bev(Tape<T>&, const CameraToBevParams<T>&, const Tensor<T>&,    \
                                   std::vector<Array<double>>*);                               \
  template Tensor<T> conv_bev_encoder(Tape<T>&, ConvBevEncoder<T>&, const Tensor<T>&, Mode);   \
  template Tensor<T> gps_mlp(Tape<T>&, const GpsMlpParams<T>&, const Tensor<T>&);

BEVBEAM_INSTANTIATE_ENCODERS(float)
BEVBEAM_INSTANTIATE_ENCODERS(double)

}  // namespace bevbeam
