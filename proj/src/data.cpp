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

#include "bevbeam/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "bevbeam/errors.hpp"

namespace bevbeam {

static_assert(std::endian::native == std::endian::little,
              "the tensor container is written with native little-endian stores");

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Tensor container

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

template <class T>
std::string encode_tensor(const Array<T>& a) {
  if (a.ndim() > 255) throw ContractError("tensor rank exceeds 255");
  if (a.data.size() != numel(a.shape)) throw ContractError("tensor data does not match its shape");
  std::string out(kBvtHeaderBytes + 4 * a.ndim() + a.size() * sizeof(T), '\0');
  std::memcpy(out.data(), "BVT1", 4);
  out[4] = static_cast<char>(dtype_of<T>::value);
  out[5] = static_cast<char>(a.ndim());
  std::size_t off = kBvtHeaderBytes;
  for (std::size_t d : a.shape) {
    if (d > 0xffffffffu) throw ContractError("tensor dimension exceeds u32");
    const std::uint32_t v = static_cast<std::uint32_t>(d);
    std::memcpy(out.data() + off, &v, 4);
    off += 4;
  }
  if (!a.data.empty()) std::memcpy(out.data() + off, a.data.data(), a.size() * sizeof(T));
  return out;
}

namespace {

[[noreturn]] void format_error(const std::string& name, std::size_t offset, const std::string& what) {
  throw FormatError(name + ": " + what + " at offset " + std::to_string(offset));
}

DType header_dtype(std::string_view bytes, const std::string& name) {
  if (bytes.size() < kBvtHeaderBytes) format_error(name, bytes.size(), "truncated header");
  if (bytes.substr(0, 4) != "BVT1") format_error(name, 0, "bad magic");
  const auto code = static_cast<std::uint8_t>(bytes[4]);
  if (code > static_cast<std::uint8_t>(DType::c64)) {
    format_error(name, 4, "unknown dtype code " + std::to_string(code));
  }
  return static_cast<DType>(code);
}

}  // namespace

template <class T>
Array<T> decode_tensor(std::string_view bytes, const std::string& name) {
  const DType dt = header_dtype(bytes, name);
  if (dt != dtype_of<T>::value) {
    format_error(name, 4, std::string("dtype ") + dtype_name(dt) + ", expected " +
                              dtype_name(dtype_of<T>::value));
  }
  const std::size_t ndim = static_cast<std::uint8_t>(bytes[5]);
  if (bytes.size() < kBvtHeaderBytes + 4 * ndim) format_error(name, bytes.size(), "truncated dims");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + kBvtHeaderBytes + 4 * i, 4);
    shape[i] = v;
  }
  const std::size_t off = kBvtHeaderBytes + 4 * ndim;
  const std::size_t payload = numel(shape) * sizeof(T);
  if (bytes.size() != off + payload) {
    format_error(name, off, "payload of " + std::to_string(bytes.size() - off) + " bytes, expected " +
                                std::to_string(payload));
  }
  Array<T> a(shape);
  if (payload) std::memcpy(a.data.data(), bytes.data() + off, payload);
  return a;
}

template <class T>
void save_tensor(const fs::path& path, const Array<T>& a) {
  write_file(path, encode_tensor(a));
}

template <class T>
Array<T> load_tensor(const fs::path& path) {
  return decode_tensor<T>(read_file(path), path.string());
}

DType peek_dtype(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string head(kBvtHeaderBytes, '\0');
  in.read(head.data(), kBvtHeaderBytes);
  head.resize(static_cast<std::size_t>(in.gcount()));
  return header_dtype(head, path.string());
}

#define BEVBEAM_INSTANTIATE_BVT(T)                                             \
  template std::string encode_tensor(const Array<T>&);                         \
  template Array<T> decode_tensor<T>(std::string_view, const std::string&);    \
  template void save_tensor(const fs::path&, const Array<T>&);                 \
  template Array<T> load_tensor<T>(const fs::path&);

BEVBEAM_INSTANTIATE_BVT(float)
BEVBEAM_INSTANTIATE_BVT(double)
BEVBEAM_INSTANTIATE_BVT(std::uint8_t)
BEVBEAM_INSTANTIATE_BVT(complex64)

// ---------------------------------------------------------------------------
// Samples

void CodebookSpec::validate() const {
  if (beams < 2) throw ContractError("codebook needs at least 2 beams");
  if (!(fov_deg > 0.0 && fov_deg <= 360.0)) throw ContractError("codebook fov must lie in (0, 360]");
}

void SampleSequence::validate() const {
  const std::string who = "sample " + seq_id + ": ";
  if (camera.size() != kTimesteps || lidar.size() != kTimesteps || radar.size() != kTimesteps) {
    throw ContractError(who + "expected " + std::to_string(kTimesteps) + " frames per sensor");
  }
  if (beams < 2) throw ContractError(who + "codebook size must be at least 2");
  if (label >= beams) {
    throw ContractError(who + "label " + std::to_string(label) + " outside [0, " +
                        std::to_string(beams) + ")");
  }
  for (const auto& c : camera) c.validate();
  for (const auto& r : radar) r.validate();
  for (const auto& r : radar) {
    if (r.samples.shape != radar.front().samples.shape) {
      throw DimensionError(who + "radar cube shape changes across frames");
    }
  }
  for (const auto& g : gps) {
    if (!std::isfinite(g.dx) || !std::isfinite(g.dy)) throw NumericError(who + "non-finite GPS");
  }
}

Dataset::Dataset(fs::path root, std::vector<IndexEntry> entries)
    : root_(std::move(root)), entries_(std::move(entries)) {}

namespace {

std::string frame_name(const char* sensor, std::size_t t) {
  return std::string(sensor) + "_t" + std::to_string(t + 1) + ".bvt";
}

Array<float> cloud_to_array(const PointCloud& pc) {
  Array<float> a(Shape{pc.points.size(), 4});
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    const auto& p = pc.points[i];
    a[4 * i] = p.x;
    a[4 * i + 1] = p.y;
    a[4 * i + 2] = p.z;
    a[4 * i + 3] = p.intensity;
  }
  return a;
}

PointCloud array_to_cloud(const Array<float>& a, const fs::path& path) {
  if (a.ndim() != 2 || a.shape[1] != 4) {
    throw FormatError(path.string() + ": point cloud must be [N, 4], got " + shape_str(a.shape));
  }
  PointCloud pc;
  pc.points.resize(a.shape[0]);
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    pc.points[i] = {a[4 * i], a[4 * i + 1], a[4 * i + 2], a[4 * i + 3]};
  }
  return pc;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw FormatError(where + ": expected an integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

void write_sample(const fs::path& dir, const SampleSequence& s) {
  s.validate();
  fs::create_directories(dir);
  for (std::size_t t = 0; t < kTimesteps; ++t) {
    save_tensor(dir / frame_name("cam", t), s.camera[t].pixels);
    save_tensor(dir / frame_name("lidar", t), cloud_to_array(s.lidar[t]));
    save_tensor(dir / frame_name("radar", t), s.radar[t].samples);
  }
  Array<double> g(Shape{kGpsReadings, 2});
  for (std::size_t i = 0; i < kGpsReadings; ++i) {
    g[2 * i] = s.gps[i].dx;
    g[2 * i + 1] = s.gps[i].dy;
  }
  save_tensor(dir / "gps.bvt", g);
  std::ostringstream meta;
  meta.precision(17);
  meta << "theta_offset=" << s.theta_offset << "\nbeams=" << s.beams << "\n";
  write_file(dir / "meta.txt", meta.str());
}

SampleSequence read_sample(const fs::path& dir, const IndexEntry& entry) {
  SampleSequence s;
  s.seq_id = entry.seq_id;
  s.scenario_id = entry.scenario_id;
  s.label = entry.label;
  for (std::size_t t = 0; t < kTimesteps; ++t) {
    s.camera.push_back({load_tensor<std::uint8_t>(dir / frame_name("cam", t))});
    const fs::path lp = dir / frame_name("lidar", t);
    s.lidar.push_back(array_to_cloud(load_tensor<float>(lp), lp));
    s.radar.push_back({load_tensor<complex64>(dir / frame_name("radar", t))});
  }
  const fs::path gp = dir / "gps.bvt";
  const Array<double> g = load_tensor<double>(gp);
  if (g.shape != Shape{kGpsReadings, 2}) {
    throw FormatError(gp.string() + ": expected shape [2, 2], got " + shape_str(g.shape));
  }
  for (std::size_t i = 0; i < kGpsReadings; ++i) s.gps[i] = {g[2 * i], g[2 * i + 1]};

  const fs::path mp = dir / "meta.txt";
  std::istringstream meta(read_file(mp));
  std::string line;
  bool have_theta = false, have_beams = false;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(mp.string() + ": malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "theta_offset") {
      try {
        s.theta_offset = std::stod(value);
      } catch (const std::exception&) {
        throw FormatError(mp.string() + ": bad theta_offset '" + value + "'");
      }
      have_theta = true;
    } else if (key == "beams") {
      s.beams = parse_size(value, mp.string());
      have_beams = true;
    } else {
      throw FormatError(mp.string() + ": unknown key '" + key + "'");
    }
  }
  if (!have_theta || !have_beams) throw FormatError(mp.string() + ": missing theta_offset or beams");
  s.validate();
  return s;
}

SampleSequence Dataset::load(std::size_t i) const {
  const IndexEntry& e = entries_.at(i);
  return read_sample(root_ / e.dir, e);
}

void write_index(const fs::path& root, const std::vector<IndexEntry>& entries) {
  std::ostringstream ss;
  ss << "seq_id,scenario_id,label,dir\n";
  for (const auto& e : entries) {
    ss << e.seq_id << ',' << e.scenario_id << ',' << e.label << ',' << e.dir << '\n';
  }
  fs::create_directories(root);
  write_file(root / "index.csv", ss.str());
}

Dataset load_dataset(const fs::path& root) {
  const fs::path index = root / "index.csv";
  if (!fs::exists(index)) throw IoError("missing dataset index " + index.string());
  std::istringstream in(read_file(index));
  std::string line;
  if (!std::getline(in, line) || line != "seq_id,scenario_id,label,dir") {
    throw FormatError(index.string() + ": unexpected header '" + line + "'");
  }
  std::vector<IndexEntry> entries;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = index.string() + ":" + std::to_string(lineno);
    if (f.size() != 4) throw FormatError(where + ": expected 4 columns");
    entries.push_back({f[0], parse_size(f[1], where), parse_size(f[2], where), f[3]});
    if (!fs::is_directory(root / f[3])) {
      throw IoError(where + ": missing sequence directory " + (root / f[3]).string());
    }
  }
  return Dataset(root, std::move(entries));
}

// ---------------------------------------------------------------------------
// Splitting

DatasetSplit split_keys(const std::vector<std::pair<std::size_t, std::size_t>>& keys,
                        std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ContractError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("split ratios must sum to 1");
  const std::size_t n = keys.size();

  auto apportion = [&](std::size_t count) {
    std::array<std::size_t, 3> q{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = ratios[s] * double(count);
      q[s] = static_cast<std::size_t>(std::floor(exact));
      rem[s] = exact - double(q[s]);
      used += q[s];
    }
    while (used < count) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (rem[s] > rem[best]) best = s;
      ++q[best];
      rem[best] = -1.0;
      ++used;
    }
    return q;
  };

  std::map<std::size_t, std::vector<std::size_t>> by_scenario;
  for (std::size_t i = 0; i < n; ++i) by_scenario[keys[i].first].push_back(i);

  // Per-scenario quotas: floor of the proportional share plus at most one
  // extra unit per split, with column totals matching the global
  // apportionment. Extra units are routed by max-flow, first over cells with
  // a fractional remainder, then over any cell.
  const auto global = apportion(n);
  std::vector<std::array<std::size_t, 3>> quota;
  std::vector<std::array<double, 3>> frac;
  std::array<std::size_t, 3> col_floor{};
  std::vector<std::size_t> row_need;
  for (const auto& [scen, idx] : by_scenario) {
    std::array<std::size_t, 3> q{};
    std::array<double, 3> f{};
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = ratios[s] * double(idx.size());
      q[s] = static_cast<std::size_t>(std::floor(exact));
      f[s] = exact - double(q[s]);
      used += q[s];
      col_floor[s] += q[s];
    }
    quota.push_back(q);
    frac.push_back(f);
    row_need.push_back(idx.size() - used);
  }
  const std::size_t rows = quota.size();
  // nodes: 0 source, 1..rows scenarios, rows+1..rows+3 splits, rows+4 sink
  const std::size_t nodes = rows + 5, sink = rows + 4;
  std::vector<std::vector<long>> cap(nodes, std::vector<long>(nodes, 0));
  for (std::size_t j = 0; j < rows; ++j) cap[0][1 + j] = long(row_need[j]);
  for (int s = 0; s < 3; ++s) cap[rows + 1 + s][sink] = long(global[s]) - long(col_floor[s]);
  auto augment = [&]() {
    std::vector<long> parent(nodes, -1);
    parent[0] = 0;
    std::vector<std::size_t> queue{0};
    for (std::size_t h = 0; h < queue.size() && parent[sink] < 0; ++h) {
      const std::size_t u = queue[h];
      for (std::size_t v = 0; v < nodes; ++v) {
        if (parent[v] < 0 && cap[u][v] > 0) {
          parent[v] = long(u);
          queue.push_back(v);
        }
      }
    }
    if (parent[sink] < 0) return false;
    for (std::size_t v = sink; v != 0; v = std::size_t(parent[v])) {
      --cap[std::size_t(parent[v])][v];
      ++cap[v][std::size_t(parent[v])];
    }
    return true;
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < rows; ++j)
      for (int s = 0; s < 3; ++s) {
        const std::size_t a = 1 + j, b = rows + 1 + s;
        if (cap[a][b] == 0 && cap[b][a] == 0 && (pass == 1 || frac[j][s] > 0.0)) cap[a][b] = 1;
      }
    while (augment()) {
    }
  }
  for (std::size_t j = 0; j < rows; ++j)
    for (int s = 0; s < 3; ++s) quota[j][s] += std::size_t(cap[rows + 1 + s][1 + j]);
  std::size_t row = 0;
  for (const auto& [scen, idx] : by_scenario) {
    auto& q = quota[row];
    while (q[0] + q[1] + q[2] < idx.size()) {
      const auto& f = frac[row];
      const int best = int(std::max_element(f.begin(), f.end()) - f.begin());
      ++q[best];
    }
    ++row;
  }

  DatasetSplit out;
  std::mt19937_64 rng(seed);
  row = 0;
  for (auto& [scen, idx] : by_scenario) {
    // group by label, shuffled within each label, then deal systematically
    std::map<std::size_t, std::vector<std::size_t>> by_label;
    for (std::size_t i : idx) by_label[keys[i].second].push_back(i);
    std::vector<std::size_t> order;
    for (auto& [label, members] : by_label) {
      std::shuffle(members.begin(), members.end(), rng);
      order.insert(order.end(), members.begin(), members.end());
    }
    const auto& q = quota[row++];
    std::array<std::size_t, 3> taken{};
    for (std::size_t k = 0; k < order.size(); ++k) {
      int best = -1;
      double best_deficit = 0.0;
      for (int s = 0; s < 3; ++s) {
        if (taken[s] >= q[s]) continue;
        const double deficit =
            double(q[s]) * double(k + 1) / double(order.size()) - double(taken[s]);
        if (best < 0 || deficit > best_deficit) {
          best = s;
          best_deficit = deficit;
        }
      }
      ++taken[best];
      (best == 0 ? out.train : best == 1 ? out.val : out.test).push_back(order[k]);
    }
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

DatasetSplit split_dataset(const Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  for (const auto& e : ds.entries()) keys.emplace_back(e.scenario_id, e.label);
  return split_keys(keys, ratios, seed);
}

// ---------------------------------------------------------------------------
// Oracle and synthetic generation

OracleResult oracle_beam(const GpsReading& pos, const CodebookSpec& cb) {
  cb.validate();
  const double fov = cb.fov_deg * std::numbers::pi / 180.0;
  const double az = std::atan2(pos.dx, pos.dy);
  const double m = std::floor((az + fov / 2.0) / fov * double(cb.beams));
  OracleResult r;
  r.flagged = std::abs(az) > fov / 2.0;
  r.beam = static_cast<std::size_t>(std::clamp(m, 0.0, double(cb.beams - 1)));
  return r;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SyntheticScenarioConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ContractError("synthetic config: " + msg);
  };
  codebook.validate();
  require(n_sequences >= 1, "n_sequences must be at least 1");
  require(scenarios >= 1, "scenarios must be at least 1");
  require(extent > 0.0, "extent must be positive");
  require(speed_min >= 0.0 && speed_max >= speed_min, "invalid speed range");
  require(frame_interval > 0.0, "frame_interval must be positive");
  require(range_min > 0.0 && range_max >= range_min, "invalid lane range");
  require(gps_sigma >= 0.0 && radar_noise >= 0.0 && camera_noise >= 0, "noise levels must be >= 0");
  require(image_size >= 32, "image_size must be at least 32");
  require(antennas >= 2 && chirps >= 2 && range_bins >= 2, "radar cube axes must be >= 2");
  require(radar_max_range > 0.0 && radar_max_speed > 0.0, "radar limits must be positive");
  require(codebook.fov_deg < 180.0, "synthetic fov must be below 180 degrees");
}

double SyntheticScenarioConfig::theta_offset(std::size_t scenario) const {
  if (scenario == 0) return 0.0;
  return (scenario % 2 ? 0.6 : -0.6) * double(scenario);
}

namespace {

struct Trajectory {
  std::size_t scenario = 0;
  double lane = 0.0;  // y of the lane
  double x_last = 0.0;
  double vx = 0.0;
};

Trajectory make_trajectory(const SyntheticScenarioConfig& cfg, std::size_t index) {
  std::mt19937_64 rng(mix_seed(cfg.seed, 2 * index));
  Trajectory tr;
  tr.scenario = index % cfg.scenarios;
  // scenarios occupy successive distance bands of the lane range
  const double band = (cfg.range_max - cfg.range_min) / double(cfg.scenarios);
  const double lo = cfg.range_min + band * double(tr.scenario);
  tr.lane = std::uniform_real_distribution<double>(lo, lo + band)(rng);
  const double half = 0.98 * cfg.codebook.fov_deg * std::numbers::pi / 360.0;
  const double az = std::uniform_real_distribution<double>(-half, half)(rng);
  tr.x_last = tr.lane * std::tan(az);
  const double speed = std::uniform_real_distribution<double>(cfg.speed_min, cfg.speed_max)(rng);
  tr.vx = std::bernoulli_distribution(0.5)(rng) ? speed : -speed;
  return tr;
}

GpsReading position_at(const SyntheticScenarioConfig& cfg, const Trajectory& tr, std::size_t t) {
  const double back = double(kTimesteps - 1 - t) * cfg.frame_interval;
  return {tr.x_last - tr.vx * back, tr.lane};
}

constexpr double kVehicleLength = 4.5;
constexpr double kVehicleWidth = 1.8;
constexpr double kVehicleHeight = 1.6;
constexpr double kCameraHeight = 2.0;

CameraFrame render_camera(const SyntheticScenarioConfig& cfg, const GpsReading& p,
                          std::mt19937_64& rng) {
  const std::size_t n = cfg.image_size;
  const double c = double(n) / 2.0, f = c;  // 90 degree horizontal fov
  CameraFrame frame{Array<std::uint8_t>(Shape{n, n, 3})};
  std::uniform_int_distribution<int> jitter(-cfg.camera_noise, cfg.camera_noise);
  const double near = p.dy - kVehicleWidth / 2.0;
  const double u0 = c + f * (p.dx - kVehicleLength / 2.0) / near;
  const double u1 = c + f * (p.dx + kVehicleLength / 2.0) / near;
  const double v0 = c + f * (kCameraHeight - kVehicleHeight) / near;
  const double v1 = c + f * kCameraHeight / near;
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u = 0; u < n; ++u) {
      const double fu = double(u) / double(n - 1), fv = double(v) / double(n - 1);
      double rgb[3];
      const bool vehicle = double(u) + 0.5 >= u0 && double(u) + 0.5 < u1 &&
                           double(v) + 0.5 >= v0 && double(v) + 0.5 < v1;
      if (vehicle) {
        rgb[0] = 245.0;
        rgb[1] = 240.0;
        rgb[2] = 225.0;
      } else {
        // column-coded background with a mild checker texture
        const double tex = ((u / 16 + v / 16) % 2) ? 10.0 : -10.0;
        rgb[0] = 30.0 + 150.0 * fu + tex;
        rgb[1] = 70.0 + 60.0 * fv + tex;
        rgb[2] = 180.0 - 150.0 * fu + tex;
      }
      for (int k = 0; k < 3; ++k) {
        const double val = std::clamp(rgb[k] + double(jitter(rng)), 0.0, 255.0);
        frame.pixels[(v * n + u) * 3 + k] = static_cast<std::uint8_t>(std::lround(val));
      }
    }
  }
  return frame;
}

PointCloud render_lidar(const SyntheticScenarioConfig& cfg, const GpsReading& p,
                        std::mt19937_64& rng) {
  PointCloud pc;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jit(0.0, 0.03);
  for (std::size_t i = 0; i < cfg.vehicle_points; ++i) {
    const double x = p.dx + (u01(rng) - 0.5) * kVehicleLength;
    double y, z;
    if (u01(rng) < 0.6) {  // face toward the sensor
      y = p.dy - kVehicleWidth / 2.0;
      z = u01(rng) * kVehicleHeight;
    } else {  // roof
      y = p.dy + (u01(rng) - 0.5) * kVehicleWidth;
      z = kVehicleHeight;
    }
    pc.points.push_back({float(x + jit(rng)), float(y + jit(rng)), float(z + jit(rng)),
                         float(0.6 + 0.4 * u01(rng))});
  }
  for (std::size_t i = 0; i < cfg.clutter_points; ++i) {
    const double x = (2.0 * u01(rng) - 1.0) * cfg.extent;
    const double y = u01(rng) * cfg.extent;
    pc.points.push_back({float(x), float(y), float(-0.1 + 0.4 * u01(rng)), float(0.3 * u01(rng))});
  }
  return pc;
}

RadarCube render_radar(const SyntheticScenarioConfig& cfg, const GpsReading& p, double vx,
                       std::mt19937_64& rng) {
  const std::size_t na = cfg.antennas, nc = cfg.chirps, nr = cfg.range_bins;
  RadarCube cube{Array<complex64>(Shape{na, nc, nr})};
  const double range = std::hypot(p.dx, p.dy);
  const double sin_az = p.dx / range;
  const double radial = vx * sin_az;
  const double r0 = range / cfg.radar_max_range * double(nr);
  const double doppler = radial / (2.0 * cfg.radar_max_speed);  // cycles per chirp
  std::normal_distribution<double> noise(0.0, cfg.radar_noise / std::sqrt(2.0));
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t c = 0; c < nc; ++c) {
      const double phase = std::numbers::pi * double(a) * sin_az +
                           2.0 * std::numbers::pi * doppler * double(c);
      for (std::size_t r = 0; r < nr; ++r) {
        const double d = double(r) - r0;
        const double amp = std::exp(-d * d / (2.0 * 0.7 * 0.7));
        cube.samples[(a * nc + c) * nr + r] =
            complex64(float(amp * std::cos(phase) + noise(rng)),
                      float(amp * std::sin(phase) + noise(rng)));
      }
    }
  return cube;
}

}  // namespace

GpsReading synthetic_position(const SyntheticScenarioConfig& cfg, std::size_t index,
                              std::size_t t) {
  if (t >= kTimesteps) throw ContractError("synthetic_position: time step out of range");
  return position_at(cfg, make_trajectory(cfg, index), t);
}

SampleSequence synthesize_sequence(const SyntheticScenarioConfig& cfg, std::size_t index) {
  cfg.validate();
  const Trajectory tr = make_trajectory(cfg, index);
  std::mt19937_64 rng(mix_seed(cfg.seed, 2 * index + 1));
  SampleSequence s;
  char id[32];
  std::snprintf(id, sizeof id, "seq_%05zu", index);
  s.seq_id = id;
  s.scenario_id = tr.scenario;
  s.theta_offset = cfg.theta_offset(tr.scenario);
  s.beams = cfg.codebook.beams;
  for (std::size_t t = 0; t < kTimesteps; ++t) {
    const GpsReading p = position_at(cfg, tr, t);
    s.camera.push_back(render_camera(cfg, p, rng));
    s.lidar.push_back(render_lidar(cfg, p, rng));
    s.radar.push_back(render_radar(cfg, p, tr.vx, rng));
  }
  std::normal_distribution<double> gps_noise(0.0, cfg.gps_sigma);
  const ScenarioCalibration to_raw{-s.theta_offset};
  for (std::size_t i = 0; i < kGpsReadings; ++i) {
    GpsReading raw = calibrate_gps(position_at(cfg, tr, i), to_raw);
    if (cfg.gps_sigma > 0.0) {
      raw.dx += gps_noise(rng);
      raw.dy += gps_noise(rng);
    }
    s.gps[i] = raw;
  }
  s.label = oracle_beam(position_at(cfg, tr, kTimesteps - 1), cfg.codebook).beam;
  return s;
}

Dataset generate_synthetic(const SyntheticScenarioConfig& cfg, const fs::path& root) {
  cfg.validate();
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < cfg.n_sequences; ++i) {
    const SampleSequence s = synthesize_sequence(cfg, i);
    write_sample(root / s.seq_id, s);
    entries.push_back({s.seq_id, s.scenario_id, s.label, s.seq_id});
  }
  write_index(root, entries);
  return Dataset(root, std::move(entries));
}

}  // namespace bevbeam
