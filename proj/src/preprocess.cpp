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

#include "bevbeam/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bevbeam/numerics/ops.hpp"

namespace bevbeam {

void CameraFrame::validate() const {
  if (pixels.ndim() != 3 || pixels.shape[2] != 3) {
    throw DimensionError("camera frame: expected (H,W,3) pixels, got " + shape_str(pixels.shape));
  }
  if (pixels.shape[0] < 32 || pixels.shape[1] < 32) {
    throw ContractError("camera frame: H and W must be >= 32, got " + shape_str(pixels.shape));
  }
}

void CameraNormConfig::validate() const {
  for (float s : std) {
    if (!(s > 0.0f)) throw ContractError("camera normalization: std components must be > 0");
  }
  if (out_h == 0 || out_w == 0) throw ContractError("camera normalization: empty output size");
}

void BevGridSpec::validate() const {
  if (!(extent > 0.0)) throw ContractError("bev grid: extent must be > 0");
  if (height < 8 || width < 8) {
    throw ContractError("bev grid: need at least 8 cells per axis, got " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
}

void RadarCube::validate() const {
  if (samples.ndim() != 3) {
    throw DimensionError("radar cube: expected (antennas, chirps, range), got " +
                         shape_str(samples.shape));
  }
  for (std::size_t d : samples.shape) {
    if (d < 2) throw ContractError("radar cube: every axis needs >= 2 samples, got " +
                                   shape_str(samples.shape));
  }
}

Array<float> normalize_camera(const CameraFrame& frame, const CameraNormConfig& cfg) {
  frame.validate();
  cfg.validate();
  const std::size_t h = frame.height(), w = frame.width();
  Array<float> chw(Shape{3, h, w});
  const std::uint8_t* px = frame.pixels.ptr();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        chw[(c * h + y) * w + x] = static_cast<float>(px[(y * w + x) * 3 + c]) / 255.0f;
  Array<float> out = bilinear_resize(chw, cfg.out_h, cfg.out_w);
  const std::size_t plane = cfg.out_h * cfg.out_w;
  for (std::size_t c = 0; c < 3; ++c) {
    float* p = out.ptr() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - cfg.mean[c]) / cfg.std[c];
  }
  return out;
}

Array<float> lidar_to_bev(const PointCloud& cloud, const BevGridSpec& grid,
                          LidarChannels channels) {
  grid.validate();
  const std::size_t H = grid.height, W = grid.width;
  const std::size_t plane = H * W;
  std::vector<float> height(plane, 0.0f), intensity(plane, 0.0f), density(plane, 0.0f);
  std::vector<bool> hit(plane, false);
  const double span = 2.0 * grid.extent;
  for (const LidarPoint& p : cloud.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) continue;
    const double u = (static_cast<double>(p.x) + grid.extent) / span * static_cast<double>(W);
    const double v = (static_cast<double>(p.y) + grid.extent) / span * static_cast<double>(H);
    if (u < 0.0 || v < 0.0 || u >= static_cast<double>(W) || v >= static_cast<double>(H)) continue;
    const std::size_t idx = static_cast<std::size_t>(v) * W + static_cast<std::size_t>(u);
    if (!hit[idx]) {
      hit[idx] = true;
      height[idx] = p.z;
      intensity[idx] = p.intensity;
    } else {
      height[idx] = std::max(height[idx], p.z);
      intensity[idx] = std::max(intensity[idx], p.intensity);
    }
    density[idx] += 1.0f;
  }
  if (channels == LidarChannels::height_only) {
    return Array<float>(Shape{1, H, W}, std::move(height));
  }
  Array<float> out(Shape{3, H, W});
  std::copy(height.begin(), height.end(), out.ptr());
  std::copy(intensity.begin(), intensity.end(), out.ptr() + plane);
  std::copy(density.begin(), density.end(), out.ptr() + 2 * plane);
  return out;
}

namespace {

// Power along one axis of the cube, averaged over the other non-range axis.
// `along_antennas` selects the antenna axis (RA); otherwise the chirp axis (RV).
Array<double> cube_power(const RadarCube& cube, bool along_antennas) {
  cube.validate();
  const std::size_t na = cube.antennas(), nc = cube.chirps(), nr = cube.range_bins();
  const std::size_t nfft = along_antennas ? na : nc;
  const std::size_t navg = along_antennas ? nc : na;
  Array<double> out(Shape{nr, nfft});
  std::vector<complex64> seq(nfft);
  const complex64* s = cube.samples.ptr();
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t o = 0; o < navg; ++o) {
      for (std::size_t i = 0; i < nfft; ++i) {
        const std::size_t a = along_antennas ? i : o;
        const std::size_t c = along_antennas ? o : i;
        seq[i] = s[(a * nc + c) * nr + r];
      }
      const Array<double> p = fft_power(seq);
      for (std::size_t k = 0; k < nfft; ++k) out[r * nfft + k] += p[k];
    }
  for (double& v : out.data) v /= static_cast<double>(navg);
  return out;
}

Array<float> normalized_resized(const Array<double>& map, std::size_t out_h, std::size_t out_w) {
  double peak = 0.0;
  for (double v : map.data) peak = std::max(peak, v);
  Array<float> f(map.shape);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < map.size(); ++i) f[i] = static_cast<float>(map[i] / peak);
  }
  Array<float> r = bilinear_resize(f, out_h, out_w);
  for (float& v : r.data) v = std::clamp(v, 0.0f, 1.0f);
  return r;
}

}  // namespace

Array<double> range_angle_power(const RadarCube& cube) { return cube_power(cube, true); }

Array<double> range_velocity_power(const RadarCube& cube) { return cube_power(cube, false); }

Array<float> radar_to_maps(const RadarCube& cube, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ContractError("radar_to_maps: empty output size");
  const Array<float> ra = normalized_resized(range_angle_power(cube), out_h, out_w);
  const Array<float> rv = normalized_resized(range_velocity_power(cube), out_h, out_w);
  Array<float> out(Shape{2, out_h, out_w});
  std::copy(ra.data.begin(), ra.data.end(), out.ptr());
  std::copy(rv.data.begin(), rv.data.end(), out.ptr() + out_h * out_w);
  return out;
}

GpsReading calibrate_gps(const GpsReading& g, const ScenarioCalibration& cal) {
  const double c = std::cos(cal.theta_offset);
  const double s = std::sin(cal.theta_offset);
  return {c * g.dx - s * g.dy, s * g.dx + c * g.dy};
}

namespace {

std::size_t grid_index(double d, double extent, std::size_t cells) {
  const double top = static_cast<double>(cells - 1);
  double v = (d + extent) / (2.0 * extent) * top;
  if (std::isnan(v)) v = 0.0;
  return static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, top)));
}

}  // namespace

GridCell gps_cell(const GpsReading& g, const BevGridSpec& grid) {
  grid.validate();
  return {grid_index(g.dy, grid.extent, grid.height), grid_index(g.dx, grid.extent, grid.width)};
}

Array<float> gps_to_mask(const GpsReading& g, const BevGridSpec& grid) {
  const GridCell cell = gps_cell(g, grid);
  Array<float> mask(Shape{1, grid.height, grid.width});
  mask[cell.row * grid.width + cell.col] = 1.0f;
  return mask;
}

}  // namespace bevbeam
