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

#include "bevbeam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bevbeam/errors.hpp"

namespace bevbeam {

namespace {

void put_frame(Array<float>& dst, std::size_t t, const Array<float>& frame) {
  std::memcpy(dst.ptr() + t * frame.size(), frame.ptr(), frame.size() * sizeof(float));
}

// Mirrors the last axis of a row-major array.
Array<float> mirror_width(const Array<float>& a) {
  Array<float> out = a;
  const std::size_t w = a.shape.back();
  for (std::size_t r = 0; r < a.size() / w; ++r) std::reverse(out.ptr() + r * w, out.ptr() + (r + 1) * w);
  return out;
}

}  // namespace

PreparedSample prepare_sample(const SampleSequence& s, const ModelConfig& cfg,
                              const CameraNormConfig& norm) {
  s.validate();
  if (s.beams != cfg.beams) {
    throw ContractError("sample " + s.seq_id + " uses a " + std::to_string(s.beams) +
                        "-beam codebook, the model expects " + std::to_string(cfg.beams));
  }
  const std::size_t t_n = kTimesteps, g = cfg.grid_cells, sz = cfg.camera_size;
  const BevGridSpec grid = cfg.grid();
  const auto channels =
      cfg.lidar_channels == 3 ? LidarChannels::height_intensity_density : LidarChannels::height_only;
  CameraNormConfig cam_cfg = norm;
  cam_cfg.out_h = sz;
  cam_cfg.out_w = sz;

  PreparedSample p;
  p.seq_id = s.seq_id;
  p.scenario_id = s.scenario_id;
  p.label = s.label;
  p.beams = s.beams;
  p.camera = Array<float>(Shape{t_n, 3, sz, sz});
  p.lidar = Array<float>(Shape{t_n, cfg.lidar_channels, g, g});
  p.radar = Array<float>(Shape{t_n, 2, g, g});
  p.gps_mask = Array<float>(Shape{t_n, 1, g, g});
  p.gps = Array<float>(Shape{kGpsReadings, 2});

  const ScenarioCalibration cal{s.theta_offset};
  std::array<GpsReading, kGpsReadings> calibrated;
  for (std::size_t i = 0; i < kGpsReadings; ++i) {
    calibrated[i] = calibrate_gps(s.gps[i], cal);
    p.gps[2 * i] = static_cast<float>(calibrated[i].dx);
    p.gps[2 * i + 1] = static_cast<float>(calibrated[i].dy);
  }
  for (std::size_t t = 0; t < t_n; ++t) {
    put_frame(p.camera, t, normalize_camera(s.camera[t], cam_cfg));
    put_frame(p.lidar, t, lidar_to_bev(s.lidar[t], grid, channels));
    put_frame(p.radar, t, radar_to_maps(s.radar[t], g, g));
    put_frame(p.gps_mask, t, gps_to_mask(calibrated[std::min(t, kGpsReadings - 1)], grid));
  }
  return p;
}

ModelBatch collate(const std::vector<PreparedSample>& samples) {
  if (samples.empty()) throw ContractError("collate: empty batch");
  const PreparedSample& first = samples.front();
  ModelBatch b;
  b.batch = samples.size();
  auto stack = [&](Array<float> PreparedSample::*field) {
    Shape shape{samples.size()};
    const Shape& inner = (first.*field).shape;
    shape.insert(shape.end(), inner.begin(), inner.end());
    Array<float> out(shape);
    const std::size_t n = (first.*field).size();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Array<float>& a = samples[i].*field;
      if (a.shape != inner) {
        throw DimensionError("collate: sample " + samples[i].seq_id + " has shape " +
                             shape_str(a.shape) + ", expected " + shape_str(inner));
      }
      std::memcpy(out.ptr() + i * n, a.ptr(), n * sizeof(float));
    }
    return out;
  };
  b.camera = stack(&PreparedSample::camera);
  b.lidar = stack(&PreparedSample::lidar);
  b.radar = stack(&PreparedSample::radar);
  b.gps_mask = stack(&PreparedSample::gps_mask);
  b.gps = Array<float>(Shape{samples.size(), 2});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    b.gps[2 * i] = samples[i].gps[2];
    b.gps[2 * i + 1] = samples[i].gps[3];
    b.labels.push_back(samples[i].label);
  }
  return b;
}

PreparedSample flip_augment(const PreparedSample& s) {
  if (s.beams < 1 || s.label >= s.beams) throw ContractError("flip_augment: label outside codebook");
  PreparedSample f = s;
  f.camera = mirror_width(s.camera);
  f.lidar = mirror_width(s.lidar);
  f.radar = mirror_width(s.radar);
  f.gps_mask = mirror_width(s.gps_mask);
  for (std::size_t i = 0; i < f.gps.size(); i += 2) f.gps[i] = -f.gps[i];
  f.label = s.beams - 1 - s.label;
  return f;
}

CameraFrame apply_photometric(const CameraFrame& frame, const PhotometricFactors& f) {
  frame.validate();
  const std::size_t n = frame.height() * frame.width();
  std::vector<double> px(n * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = frame.pixels[i];
  auto clamp = [](double v) { return std::clamp(v, 0.0, 255.0); };
  auto gray = [&](std::size_t i) {
    return 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  };
  for (double& v : px) v = clamp(v * f.brightness);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += gray(i);
  mean /= double(n);
  for (double& v : px) v = clamp((v - mean) * f.contrast + mean);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gray(i);
    for (int k = 0; k < 3; ++k) px[3 * i + k] = clamp((px[3 * i + k] - g) * f.saturation + g);
  }
  CameraFrame out{Array<std::uint8_t>(frame.pixels.shape)};
  for (std::size_t i = 0; i < px.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(px[i]));
  }
  return out;
}

CameraFrame photometric_augment(const CameraFrame& frame, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.8, 1.2);
  PhotometricFactors f;
  f.brightness = u(rng);
  f.contrast = u(rng);
  f.saturation = u(rng);
  return apply_photometric(frame, f);
}

}  // namespace bevbeam
