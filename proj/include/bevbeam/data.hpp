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

// On-disk tensor container, dataset layout, splitting, the geometric beam
// oracle and the synthetic scenario generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bevbeam/numerics/array.hpp"
#include "bevbeam/preprocess.hpp"

namespace bevbeam {

inline constexpr std::size_t kTimesteps = 5;
inline constexpr std::size_t kGpsReadings = 2;

// ---------------------------------------------------------------------------
// Tensor container (.bvt)
//
//   "BVT1" | dtype u8 | ndim u8 | 2 reserved | zero pad to 16 |
//   ndim x u32 LE dims | row-major LE payload

inline constexpr std::size_t kBvtHeaderBytes = 16;

template <class T>
std::string encode_tensor(const Array<T>& a);

/// `name` is used in error messages (usually the file path).
template <class T>
Array<T> decode_tensor(std::string_view bytes, const std::string& name);

template <class T>
void save_tensor(const std::filesystem::path& path, const Array<T>& a);

template <class T>
Array<T> load_tensor(const std::filesystem::path& path);

/// Reads only the header and returns the stored dtype.
DType peek_dtype(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// ---------------------------------------------------------------------------
// Samples and datasets

struct CodebookSpec {
  std::size_t beams = 64;
  double fov_deg = 90.0;
  void validate() const;
};

struct SampleSequence {
  std::string seq_id;
  std::size_t scenario_id = 0;
  std::vector<CameraFrame> camera;  // kTimesteps frames
  std::vector<PointCloud> lidar;
  std::vector<RadarCube> radar;
  std::array<GpsReading, kGpsReadings> gps{};  // raw readings at t=1,2
  std::size_t label = 0;
  double theta_offset = 0.0;
  std::size_t beams = 0;

  void validate() const;
};

struct IndexEntry {
  std::string seq_id;
  std::size_t scenario_id = 0;
  std::size_t label = 0;
  std::string dir;  // relative to the dataset root
};

/// Read-only handle over a dataset directory. Samples are loaded on demand.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::filesystem::path root, std::vector<IndexEntry> entries);

  const std::filesystem::path& root() const { return root_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }
  /// Loads and validates sample i. Throws IoError/FormatError naming the file.
  SampleSequence load(std::size_t i) const;

 private:
  std::filesystem::path root_;
  std::vector<IndexEntry> entries_;
};

Dataset load_dataset(const std::filesystem::path& root);

void write_sample(const std::filesystem::path& dir, const SampleSequence& s);
SampleSequence read_sample(const std::filesystem::path& dir, const IndexEntry& entry);
void write_index(const std::filesystem::path& root, const std::vector<IndexEntry>& entries);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Stratified split over (scenario, label) keys. Split sizes follow the
/// largest-remainder apportionment of the ratios, every scenario receives
/// within one sample of its proportional share, and labels are spread
/// systematically across splits within a scenario.
DatasetSplit split_keys(const std::vector<std::pair<std::size_t, std::size_t>>& keys,
                        std::array<double, 3> ratios, std::uint64_t seed);
DatasetSplit split_dataset(const Dataset& ds, std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                           std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Beam oracle and synthetic generation

struct OracleResult {
  std::size_t beam = 0;
  bool flagged = false;  // position outside the codebook fov (clamped to an edge)
};

/// m = clamp(floor((az + fov/2) / fov * M), 0, M-1) with az = atan2(dx, dy).
OracleResult oracle_beam(const GpsReading& pos, const CodebookSpec& cb);

struct SyntheticScenarioConfig {
  std::size_t n_sequences = 2000;
  std::uint64_t seed = 7;
  CodebookSpec codebook{16, 90.0};
  double extent = 40.0;  // BEV half-width the scene must stay inside, metres
  std::size_t scenarios = 3;
  double speed_min = 4.0;  // m/s
  double speed_max = 12.0;
  double frame_interval = 0.2;  // s
  double range_min = 6.0;  // distance of the lane from the BS along boresight
  double range_max = 28.0;
  double gps_sigma = 1.0;   // metres
  int camera_noise = 6;     // uniform pixel jitter amplitude
  double radar_noise = 0.3;
  std::size_t vehicle_points = 200;
  std::size_t clutter_points = 300;
  std::size_t image_size = 256;
  std::size_t antennas = 8;
  std::size_t chirps = 16;
  std::size_t range_bins = 32;
  double radar_max_range = 50.0;
  double radar_max_speed = 20.0;

  void validate() const;
  /// Calibration angle of scenario k.
  double theta_offset(std::size_t scenario) const;
};

/// Deterministic in (cfg.seed, index).
SampleSequence synthesize_sequence(const SyntheticScenarioConfig& cfg, std::size_t index);

/// True vehicle position at time step t (0-based) of sequence `index`.
GpsReading synthetic_position(const SyntheticScenarioConfig& cfg, std::size_t index,
                              std::size_t t);

/// Writes cfg.n_sequences samples plus index.csv under `root`.
Dataset generate_synthetic(const SyntheticScenarioConfig& cfg, const std::filesystem::path& root);

/// Stable 64-bit mix used to derive per-sequence seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace bevbeam
