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

#include "bevbeam/fusion_model.hpp"

#include <cstring>

#include "bevbeam/errors.hpp"

namespace bevbeam {

template <class T>
FusionParams<T>::FusionParams(const ModelConfig& cfg, std::mt19937_64& rng)
    : reduce(4 * cfg.c_bev, cfg.c_bev, 1, {1, 0}, rng), reduce_bn(cfg.c_bev) {
  for (int i = 0; i < 2; ++i) {
    ResidualBlock b;
    b.conv1 = Conv2dLayer<T>(cfg.c_bev, cfg.c_bev, 3, {1, 1}, rng);
    b.bn1 = BatchNorm2d<T>(cfg.c_bev);
    b.conv2 = Conv2dLayer<T>(cfg.c_bev, cfg.c_bev, 3, {1, 1}, rng);
    b.bn2 = BatchNorm2d<T>(cfg.c_bev);
    blocks.push_back(std::move(b));
  }
}

template <class T>
void FusionParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  reduce.visit(prefix + ".reduce", v);
  reduce_bn.visit(prefix + ".reduce_bn", v);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    blocks[i].conv1.visit(p + ".conv1", v);
    blocks[i].bn1.visit(p + ".bn1", v);
    blocks[i].conv2.visit(p + ".conv2", v);
    blocks[i].bn2.visit(p + ".bn2", v);
  }
}

template <class T>
TemporalParams<T>::TemporalParams(const ModelConfig& cfg, std::mt19937_64& rng)
    : heads(cfg.temporal_heads) {
  const std::size_t c = cfg.c_bev, hidden = cfg.ffn_mult * cfg.c_bev;
  pos_embed = parameter(init::normal<T>({cfg.timesteps, c}, 0.02, rng));
  for (std::size_t i = 0; i < cfg.temporal_layers; ++i) {
    Block b;
    b.ln1 = LayerNormLayer<T>(c);
    b.wq = LinearLayer<T>(c, c, true, rng);
    b.wk = LinearLayer<T>(c, c, true, rng);
    b.wv = LinearLayer<T>(c, c, true, rng);
    b.wo = LinearLayer<T>(c, c, true, rng);
    b.ln2 = LayerNormLayer<T>(c);
    b.ff1 = LinearLayer<T>(c, hidden, true, rng);
    b.ff2 = LinearLayer<T>(hidden, c, true, rng);
    blocks.push_back(std::move(b));
  }
}

template <class T>
void TemporalParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  v.param(prefix + ".pos_embed", pos_embed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    auto& b = blocks[i];
    b.ln1.visit(p + ".ln1", v);
    b.wq.visit(p + ".wq", v);
    b.wk.visit(p + ".wk", v);
    b.wv.visit(p + ".wv", v);
    b.wo.visit(p + ".wo", v);
    b.ln2.visit(p + ".ln2", v);
    b.ff1.visit(p + ".ff1", v);
    b.ff2.visit(p + ".ff2", v);
  }
}

template <class T>
HeadParams<T>::HeadParams(const ModelConfig& cfg, std::mt19937_64& rng)
    : fc1(cfg.c_bev, cfg.head_hidden, true, rng),
      fc2(cfg.head_hidden, cfg.beams, true, rng),
      dropout_rate(cfg.head_dropout) {}

template <class T>
void HeadParams<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
  fc1.visit(prefix + ".fc1", v);
  fc2.visit(prefix + ".fc2", v);
}

template <class T>
ModelParams<T>::ModelParams(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  backbone = CameraBackbone<T>(cfg, rng);
  camera_bev = CameraToBevParams<T>(cfg, rng);
  lidar_encoder = ConvBevEncoder<T>(cfg.lidar_channels, cfg, rng);
  radar_encoder = ConvBevEncoder<T>(2, cfg, rng);
  gps_encoder = ConvBevEncoder<T>(1, cfg, rng);
  gps_mlp = GpsMlpParams<T>(cfg, rng);
  fusion = FusionParams<T>(cfg, rng);
  temporal = TemporalParams<T>(cfg, rng);
  gate = parameter(Array<T>(Shape{1}, T(0)));
  head = HeadParams<T>(cfg, rng);
}

template <class T>
void ModelParams<T>::visit(ParamVisitor<T>& v) {
  backbone.visit("camera.backbone", v);
  camera_bev.visit("camera.to_bev", v);
  lidar_encoder.visit("lidar.encoder", v);
  radar_encoder.visit("radar.encoder", v);
  gps_encoder.visit("gps.encoder", v);
  gps_mlp.visit("gps.mlp", v);
  fusion.visit("fusion", v);
  temporal.visit("temporal", v);
  v.param("gate.s", gate);
  head.visit("head", v);
}

namespace {

template <class T>
class Collector final : public ParamVisitor<T> {
 public:
  std::vector<std::pair<std::string, Tensor<T>>> params;
  std::vector<std::pair<std::string, Array<T>*>> buffers;
  void param(const std::string& name, Tensor<T>& t) override { params.emplace_back(name, t); }
  void buffer(const std::string& name, Array<T>& a) override { buffers.emplace_back(name, &a); }
};

}  // namespace

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named_parameters() {
  Collector<T> c;
  visit(c);
  return std::move(c.params);
}

template <class T>
std::vector<std::pair<std::string, Array<T>*>> ModelParams<T>::named_buffers() {
  Collector<T> c;
  visit(c);
  return std::move(c.buffers);
}

template <class T>
std::size_t ModelParams<T>::parameter_count() {
  std::size_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

template <class T>
void ModelParams<T>::zero_grad() {
  for (auto& [name, t] : named_parameters()) t.zero_grad();
}

template <class T>
Tensor<T> fuse_bev(Tape<T>& tape, FusionParams<T>& p, const Tensor<T>& cam, const Tensor<T>& lid,
                   const Tensor<T>& rad, const Tensor<T>& gps, Mode mode) {
  const Tensor<T>* ref = nullptr;
  for (const Tensor<T>* t : {&cam, &lid, &rad, &gps}) {
    if (!t->defined()) continue;
    if (ref && t->shape() != ref->shape()) {
      throw DimensionError("fuse_bev inputs disagree: " + shape_str(ref->shape()) + " vs " +
                           shape_str(t->shape()));
    }
    if (!ref) ref = t;
  }
  if (!ref) throw ContractError("fuse_bev needs at least one modality");
  if (ref->ndim() != 4) throw DimensionError("fuse_bev expects [B, C, H, W], got " + shape_str(ref->shape()));
  Tensor<T> zeros;
  auto or_zero = [&](const Tensor<T>& t) {
    if (t.defined()) return t;
    if (!zeros.defined()) zeros = constant(Array<T>(ref->shape()));
    return zeros;
  };
  auto x = concat(tape, {or_zero(cam), or_zero(lid), or_zero(rad), or_zero(gps)}, 1);
  x = relu(tape, p.reduce_bn(tape, p.reduce(tape, x), mode));
  for (auto& b : p.blocks) {
    auto y = relu(tape, b.bn1(tape, b.conv1(tape, x), mode));
    y = b.bn2(tape, b.conv2(tape, y), mode);
    x = relu(tape, add(tape, x, y));
  }
  return x;
}

template <class T>
Tensor<T> spatial_pool(Tape<T>& tape, const Tensor<T>& fused, std::size_t batch) {
  const Shape& s = fused.shape();
  if (s.size() != 4 || batch == 0 || s[0] % batch != 0) {
    throw DimensionError("spatial_pool expects [B*T, C, H, W], got " + shape_str(s));
  }
  auto pooled = mean_axis(tape, reshape(tape, fused, {s[0], s[1], s[2] * s[3]}), 2);
  return reshape(tape, pooled, {batch, s[0] / batch, s[1]});
}

template <class T>
Tensor<T> temporal_encode(Tape<T>& tape, const TemporalParams<T>& p, const Tensor<T>& z,
                          std::size_t first_step, std::vector<Array<double>>* probe) {
  if (z.ndim() != 3) throw DimensionError("temporal_encode expects [B, T, C], got " + shape_str(z.shape()));
  const std::size_t steps = z.shape()[1], total = p.pos_embed.shape()[0];
  if (first_step + steps != total) {
    throw ContractError("temporal_encode expects " + std::to_string(total) +
                        " time steps, got " + std::to_string(steps) + " starting at " +
                        std::to_string(first_step));
  }
  auto x = add(tape, z, slice(tape, p.pos_embed, 0, first_step, steps));
  for (const auto& b : p.blocks) {
    auto h = b.ln1(tape, x);
    auto a = multi_head_attention(tape, b.wq(tape, h), b.wk(tape, h), b.wv(tape, h), p.heads, probe);
    x = add(tape, x, b.wo(tape, a));
    auto f = b.ff2(tape, gelu(tape, b.ff1(tape, b.ln2(tape, x))));
    x = add(tape, x, f);
  }
  return mean_axis(tape, x, 1);
}

template <class T>
Tensor<T> gps_inject(Tape<T>& tape, const Tensor<T>& z_final, const Tensor<T>& h_gps,
                     const Tensor<T>& gate) {
  if (z_final.shape() != h_gps.shape()) {
    throw DimensionError("gps_inject shape mismatch: " + shape_str(z_final.shape()) + " vs " +
                         shape_str(h_gps.shape()));
  }
  return add(tape, z_final, scale_by(tape, h_gps, tanh_act(tape, gate)));
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> classify_head(Tape<T>& tape, const HeadParams<T>& p,
                                              const Tensor<T>& z, Mode mode,
                                              std::mt19937_64* rng) {
  auto h = relu(tape, p.fc1(tape, z));
  if (mode == Mode::train && p.dropout_rate > 0.0) {
    if (!rng) throw ContractError("classify_head in train mode needs a random generator");
    h = dropout(tape, h, p.dropout_rate, *rng, mode);
  }
  auto logits = p.fc2(tape, h);
  return {logits, softmax(tape, logits, -1)};
}

namespace {

// Selects time steps [t0, t0+count) of a [B, T, ...] array as [B*count, ...].
template <class T>
Array<T> select_steps(const Array<float>& a, std::size_t t0, std::size_t count) {
  const std::size_t b = a.shape[0], steps = a.shape[1];
  const std::size_t inner = a.size() / (b * steps);
  Shape out_shape{b * count};
  out_shape.insert(out_shape.end(), a.shape.begin() + 2, a.shape.end());
  Array<T> out(out_shape);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < count; ++t) {
      const float* src = a.data.data() + (i * steps + t0 + t) * inner;
      T* dst = out.data.data() + (i * count + t) * inner;
      for (std::size_t k = 0; k < inner; ++k) dst[k] = static_cast<T>(src[k]);
    }
  }
  return out;
}

void check_frames(const Array<float>& a, const char* name, const Shape& expect) {
  if (a.empty()) {
    throw ContractError(std::string("forward_full: missing ") + name +
                        " input and the modality is not disabled");
  }
  if (a.ndim() == expect.size() && a.shape[0] == expect[0] && a.shape[1] != expect[1]) {
    throw ContractError(std::string("forward_full: ") + name + " has " +
                        std::to_string(a.shape[1]) + " time steps, expected " +
                        std::to_string(expect[1]));
  }
  if (a.shape != expect) {
    throw DimensionError(std::string("forward_full: ") + name + " shape " + shape_str(a.shape) +
                         ", expected " + shape_str(expect));
  }
}

}  // namespace

template <class T>
ForwardResult<T> forward_full(Tape<T>& tape, ModelParams<T>& params, const ModelBatch& batch,
                              const ForwardOptions& opts) {
  const ModelConfig& cfg = params.config;
  const std::size_t b = batch.batch, steps = cfg.timesteps, g = cfg.grid_cells;
  if (b == 0) throw ContractError("forward_full: empty batch");
  if (!(opts.use_camera || opts.use_lidar || opts.use_radar || opts.use_gps_spatial)) {
    throw ContractError("forward_full: every BEV modality is disabled");
  }
  const bool single = opts.temporal == TemporalMode::single_frame;
  const std::size_t t0 = single ? steps - 1 : 0, count = single ? 1 : steps;

  auto frames = [&](bool use, const Array<float>& a, const char* name, std::size_t c,
                    std::size_t h, std::size_t w) -> Tensor<T> {
    if (!use) return {};
    check_frames(a, name, {b, steps, c, h, w});
    return constant(select_steps<T>(a, t0, count));
  };

  Tensor<T> cam, lid, rad, gps;
  if (auto img = frames(opts.use_camera, batch.camera, "camera", 3, cfg.camera_size,
                        cfg.camera_size);
      img.defined()) {
    auto feat = camera_backbone(tape, params.backbone, img, opts.mode);
    cam = camera_to_bev(tape, params.camera_bev, feat, opts.probe ? &opts.probe->camera : nullptr);
  }
  if (auto x = frames(opts.use_lidar, batch.lidar, "lidar", cfg.lidar_channels, g, g); x.defined()) {
    lid = conv_bev_encoder(tape, params.lidar_encoder, x, opts.mode);
  }
  if (auto x = frames(opts.use_radar, batch.radar, "radar", 2, g, g); x.defined()) {
    rad = conv_bev_encoder(tape, params.radar_encoder, x, opts.mode);
  }
  if (auto x = frames(opts.use_gps_spatial, batch.gps_mask, "gps mask", 1, g, g); x.defined()) {
    gps = conv_bev_encoder(tape, params.gps_encoder, x, opts.mode);
  }

  ForwardResult<T> r;
  auto fused = fuse_bev(tape, params.fusion, cam, lid, rad, gps, opts.mode);
  auto z = spatial_pool(tape, fused, b);
  if (opts.temporal == TemporalMode::mean_pool) {
    r.z_final = mean_axis(tape, z, 1);
  } else {
    r.z_final = temporal_encode(tape, params.temporal, z, t0,
                                opts.probe ? &opts.probe->temporal : nullptr);
  }
  r.z_aug = r.z_final;
  if (opts.use_gps_mlp) {
    if (batch.gps.empty()) {
      throw ContractError("forward_full: missing gps input and the MLP pathway is not disabled");
    }
    if (batch.gps.shape != Shape{b, 2}) {
      throw DimensionError("forward_full: gps shape " + shape_str(batch.gps.shape) +
                           ", expected " + shape_str({b, 2}));
    }
    r.h_gps = gps_mlp(tape, params.gps_mlp, constant(batch.gps.cast<T>()));
    r.z_aug = gps_inject(tape, r.z_final, r.h_gps, params.gate);
  }
  std::tie(r.logits, r.probs) = classify_head(tape, params.head, r.z_aug, opts.mode, opts.rng);
  return r;
}

#define BEVBEAM_INSTANTIATE_FUSION(T)                                                           \
  template struct FusionParams<T>;                                                              \
  template struct TemporalParams<T>;                                                            \
  template struct HeadParams<T>;                                                                \
  template struct ModelParams<T>;                                                               \
  template Tensor<T> fuse_bev(Tape<T>&, FusionParams<T>&, const Tensor<T>&, const Tensor<T>&,   \
                              const Tensor<T>&, const Tensor<T>&, Mode);                        \
  template Tensor<T> spatial_pool(Tape<T>&, const Tensor<T>&, std::size_t);                     \
  template Tensor<T> temporal_encode(Tape<T>&, const TemporalParams<T>&, const Tensor<T>&,      \
                                     std::size_t, std::vector<Array<double>>*);                 \
  template Tensor<T> gps_inject(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template std::pair<Tensor<T>, Tensor<T>> classify_head(Tape<T>&, const HeadParams<T>&,        \
                                                         const Tensor<T>&, Mode,                \
                                                         std::mt19937_64*);                     \
  template ForwardResult<T> forward_full(Tape<T>&, ModelParams<T>&, const ModelBatch&,          \
                                         const ForwardOptions&);

BEVBEAM_INSTANTIATE_FUSION(float)
BEVBEAM_INSTANTIATE_FUSION(double)

}  // namespace bevbeam
