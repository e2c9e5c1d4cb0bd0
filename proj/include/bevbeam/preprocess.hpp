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

// Sensor preprocessing: raw camera/LiDAR/radar/GPS records to the arrays the
// model consumes. Everything here is a pure function of its inputs.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "bevbeam/numerics/array.hpp"

namespace bevbeam {

/// RGB image, pixels laid out [H, W, 3].
struct CameraFrame {
  Array<std::uint8_t> pixels;

  std::size_t height() const { return pixels.shape.at(0); }
  std::size_t width() const { return pixels.shape.at(1); }
  void validate() const;
};

struct CameraNormConfig {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
  std::size_t out_h = 256;
  std::size_t out_w = 256;

  void validate() const;
};

struct LidarPoint {
  float x = 0, y = 0, z = 0;  // metres, BS-centred, +y along boresight
  float intensity = 0;        // [0, 1]
};

struct PointCloud {
  std::vector<LidarPoint> points;
};

/// Square metric grid centred on the base station. Columns follow +x, rows
/// follow +y.
struct BevGridSpec {
  double extent = 50.0;  // half-width in metres
  std::size_t height = 128;
  std::size_t width = 128;

  void validate() const;
};

enum class LidarChannels { height_only, height_intensity_density };

/// Complex radar samples laid out [antennas, chirps, range bins].
struct RadarCube {
  Array<complex64> samples;

  std::size_t antennas() const { return samples.shape.at(0); }
  std::size_t chirps() const { return samples.shape.at(1); }
  std::size_t range_bins() const { return samples.shape.at(2); }
  void validate() const;
};

/// Displacement of the UE relative to the BS in metres.
struct GpsReading {
  double dx = 0;  // east
  double dy = 0;  // north
  bool operator==(const GpsReading&) const = default;
};

struct ScenarioCalibration {
  double theta_offset = 0;  // radians, (-pi, pi]
};

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridCell&) const = default;
};

/// Bilinear resize to the configured size, then (pixel/255 - mean)/std per
/// channel. Returns [3, out_h, out_w].
Array<float> normalize_camera(const CameraFrame& frame, const CameraNormConfig& cfg = {});

/// Rasterizes the cloud onto the grid. Per cell: max height, max intensity,
/// point count. Empty cells hold 0 in every channel; out-of-extent points are
/// dropped. Returns [1, H, W] or [3, H, W].
Array<float> lidar_to_bev(const PointCloud& cloud, const BevGridSpec& grid,
                          LidarChannels channels = LidarChannels::height_only);

/// Range-angle and range-velocity power maps, each max-normalized to [0, 1]
/// and resized to (out_h, out_w), stacked as [RA, RV].
Array<float> radar_to_maps(const RadarCube& cube, std::size_t out_h, std::size_t out_w);

/// Unnormalized RA map [range bins, antennas]: chirp-averaged |DFT over antennas|^2.
Array<double> range_angle_power(const RadarCube& cube);
/// Unnormalized RV map [range bins, chirps]: antenna-averaged |DFT over chirps|^2.
Array<double> range_velocity_power(const RadarCube& cube);

/// Rotates the reading by the scenario's calibration angle.
GpsReading calibrate_gps(const GpsReading& g, const ScenarioCalibration& cal);

/// Grid cell of a reading: floor(clamp((d + E) / 2E * (cells - 1), 0, cells - 1)).
GridCell gps_cell(const GpsReading& g, const BevGridSpec& grid);

/// One-hot [1, H, W] mask at gps_cell(g).
Array<float> gps_to_mask(const GpsReading& g, const BevGridSpec& grid);

}  // namespace bevbeam
