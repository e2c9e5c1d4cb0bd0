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

#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "bevbeam/data.hpp"
#include "bevbeam/errors.hpp"

using namespace bevbeam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("bevbeam_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SyntheticScenarioConfig small_synthetic(std::size_t n) {
  SyntheticScenarioConfig c;
  c.n_sequences = n;
  c.image_size = 64;
  c.vehicle_points = 40;
  c.clutter_points = 30;
  return c;
}

GpsReading at_azimuth_deg(double deg, double r = 20.0) {
  const double a = deg * std::numbers::pi / 180.0;
  return {r * std::sin(a), r * std::cos(a)};
}

bool same_files(const fs::path& a, const fs::path& b) {
  std::set<std::string> na, nb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) na.insert(fs::relative(e.path(), a).string());
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) nb.insert(fs::relative(e.path(), b).string());
  if (na != nb) return false;
  for (const auto& n : na)
    if (read_file(a / n) != read_file(b / n)) return false;
  return true;
}

}  // namespace

TEST_CASE("tensor container round trips bit-exactly") {
  TempDir dir("bvt");
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.0f, 3.0f);
  Array<float> big(Shape{3, 256, 256});
  for (auto& v : big.data) v = n(rng);
  big[0] = -0.0f;
  big[1] = std::numeric_limits<float>::denorm_min();
  save_tensor(dir.path / "a.bvt", big);
  CHECK(load_tensor<float>(dir.path / "a.bvt") == big);
  CHECK(fs::file_size(dir.path / "a.bvt") == 16 + 4 * 3 + big.size() * 4);
  CHECK(std::signbit(load_tensor<float>(dir.path / "a.bvt")[0]));

  auto s = Array<double>::scalar(2.5);
  save_tensor(dir.path / "s.bvt", s);
  auto back = load_tensor<double>(dir.path / "s.bvt");
  CHECK(back.shape.empty());
  CHECK(back[0] == 2.5);
  CHECK(fs::file_size(dir.path / "s.bvt") == 16 + 8);

  Array<std::uint8_t> u(Shape{2, 3}, {1, 2, 3, 250, 251, 255});
  CHECK(decode_tensor<std::uint8_t>(encode_tensor(u), "u") == u);
  Array<complex64> c(Shape{2}, {complex64(1.5f, -2.0f), complex64(0.0f, 3.0f)});
  const auto enc = encode_tensor(c);
  CHECK(enc.size() == 16 + 4 + 16);
  float im;
  std::memcpy(&im, enc.data() + 20 + 4, 4);
  CHECK(im == -2.0f);  // interleaved re, im
  CHECK(decode_tensor<complex64>(enc, "c") == c);
  Array<float> empty(Shape{0, 4});
  CHECK(decode_tensor<float>(encode_tensor(empty), "e").shape == Shape{0, 4});
}

TEST_CASE("tensor container header layout") {
  Array<float> a(Shape{2, 3}, 1.0f);
  const auto b = encode_tensor(a);
  CHECK(b.substr(0, 4) == "BVT1");
  CHECK(b[4] == 0);
  CHECK(b[5] == 2);
  for (int i = 6; i < 16; ++i) CHECK(b[i] == 0);
  std::uint32_t d0, d1;
  std::memcpy(&d0, b.data() + 16, 4);
  std::memcpy(&d1, b.data() + 20, 4);
  CHECK(d0 == 2);
  CHECK(d1 == 3);
  CHECK(encode_tensor(Array<double>(Shape{1}))[4] == 1);
  CHECK(encode_tensor(Array<std::uint8_t>(Shape{1}))[4] == 2);
  CHECK(encode_tensor(Array<complex64>(Shape{1}))[4] == 3);
}

TEST_CASE("tensor container rejects corrupt input") {
  TempDir dir("bvt_bad");
  Array<float> a(Shape{4}, 2.0f);
  auto bytes = encode_tensor(a);

  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  write_file(dir.path / "m.bvt", bad_magic);
  try {
    load_tensor<float>(dir.path / "m.bvt");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("m.bvt") != std::string::npos);
    CHECK(msg.find("magic") != std::string::npos);
    CHECK(msg.find("offset 0") != std::string::npos);
  }

  auto bad_dtype = bytes;
  bad_dtype[4] = 9;
  CHECK_THROWS_WITH_AS(decode_tensor<float>(bad_dtype, "d"), doctest::Contains("dtype code 9"),
                       FormatError);
  CHECK_THROWS_AS(decode_tensor<double>(bytes, "wrong"), FormatError);
  CHECK_THROWS_AS(decode_tensor<float>(bytes.substr(0, bytes.size() - 1), "t"), FormatError);
  CHECK_THROWS_AS(decode_tensor<float>(bytes.substr(0, 10), "h"), FormatError);
  CHECK_THROWS_WITH_AS(load_tensor<float>(dir.path / "absent.bvt"), doctest::Contains("absent.bvt"),
                       IoError);
  CHECK(peek_dtype((write_file(dir.path / "ok.bvt", bytes), dir.path / "ok.bvt")) == DType::f32);
}

TEST_CASE("oracle_beam examples and monotonicity") {
  CodebookSpec cb{16, 90.0};
  CHECK(oracle_beam(at_azimuth_deg(0.0), cb).beam == 8);
  CHECK(oracle_beam(at_azimuth_deg(-45.0), cb).beam == 0);
  CHECK_FALSE(oracle_beam(at_azimuth_deg(-45.0), cb).flagged);
  CHECK(oracle_beam(at_azimuth_deg(44.9), cb).beam == 15);
  CHECK(oracle_beam(at_azimuth_deg(45.0), cb).beam == 15);

  auto behind = oracle_beam({3.0, -5.0}, cb);
  CHECK(behind.flagged);
  CHECK(behind.beam == 15);
  CHECK(oracle_beam({-3.0, -5.0}, cb).beam == 0);
  CHECK(oracle_beam(at_azimuth_deg(60.0), cb).flagged);

  std::size_t prev = 0;
  for (double deg = -50.0; deg <= 50.0; deg += 0.05) {
    const std::size_t m = oracle_beam(at_azimuth_deg(deg), cb).beam;
    CHECK(m >= prev);
    prev = m;
  }
  CodebookSpec wide{64, 90.0};
  CHECK(oracle_beam(at_azimuth_deg(0.0), wide).beam == 32);
}

TEST_CASE("synthetic labels cover the codebook") {
  SyntheticScenarioConfig cfg;
  cfg.n_sequences = 1000;
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < cfg.n_sequences; ++i) {
    seen.insert(oracle_beam(synthetic_position(cfg, i, kTimesteps - 1), cfg.codebook).beam);
  }
  CHECK(double(seen.size()) >= 0.8 * double(cfg.codebook.beams));
  auto small = small_synthetic(4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(synthesize_sequence(small, i).label ==
          oracle_beam(synthetic_position(small, i, kTimesteps - 1), small.codebook).beam);
  }
}

TEST_CASE("zero-noise GPS lands in the cell of the true position") {
  auto cfg = small_synthetic(6);
  cfg.gps_sigma = 0.0;
  BevGridSpec grid{cfg.extent, 32, 32};
  for (std::size_t i = 0; i < cfg.n_sequences; ++i) {
    auto s = synthesize_sequence(cfg, i);
    const GpsReading truth = synthetic_position(cfg, i, 1);
    const GpsReading cal = calibrate_gps(s.gps[1], {s.theta_offset});
    CHECK(std::abs(cal.dx - truth.dx) < 1e-9);
    CHECK(std::abs(cal.dy - truth.dy) < 1e-9);
    const GridCell cell = gps_cell(truth, grid);
    auto mask = gps_to_mask(cal, grid);
    CHECK(mask[cell.row * 32 + cell.col] == 1.0f);
  }
}

TEST_CASE("synthetic generation is deterministic and loads back") {
  TempDir a("gen_a"), b("gen_b"), c("gen_c");
  auto cfg = small_synthetic(5);
  generate_synthetic(cfg, a.path);
  generate_synthetic(cfg, b.path);
  CHECK(same_files(a.path, b.path));
  cfg.seed += 1;
  generate_synthetic(cfg, c.path);
  CHECK(read_file(a.path / "index.csv") != read_file(c.path / "index.csv"));

  auto ds = load_dataset(a.path);
  REQUIRE(ds.size() == 5);
  auto s = ds.load(3);
  CHECK(s.seq_id == "seq_00003");
  CHECK(s.camera.size() == kTimesteps);
  CHECK(s.camera[0].pixels.shape == Shape{64, 64, 3});
  CHECK(s.beams == 16);

  // re-serialize and compare payloads
  TempDir re("gen_re");
  for (std::size_t i = 0; i < ds.size(); ++i) write_sample(re.path / ds.entry(i).dir, ds.load(i));
  write_index(re.path, ds.entries());
  CHECK(same_files(a.path, re.path));
}

TEST_CASE("dataset loading reports broken files") {
  TempDir dir("broken");
  generate_synthetic(small_synthetic(2), dir.path);
  auto ds = load_dataset(dir.path);
  const fs::path cam = dir.path / "seq_00001" / "cam_t3.bvt";
  auto bytes = read_file(cam);
  bytes[0] = 'X';
  write_file(cam, bytes);
  CHECK_THROWS_WITH_AS(ds.load(1), doctest::Contains("cam_t3.bvt"), FormatError);
  CHECK_NOTHROW(ds.load(0));
  fs::remove(dir.path / "seq_00000" / "gps.bvt");
  CHECK_THROWS_WITH_AS(ds.load(0), doctest::Contains("gps.bvt"), IoError);
  CHECK_THROWS_AS(load_dataset(dir.path / "nowhere"), IoError);
}

TEST_CASE("split_dataset sizes, disjointness and stratification") {
  std::mt19937_64 rng(5);
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  for (std::size_t i = 0; i < 100; ++i) keys.emplace_back(i % 3, rng() % 16);
  auto s = split_keys(keys, {0.8, 0.1, 0.1}, 1);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
  std::set<std::size_t> all;
  for (auto* v : {&s.train, &s.val, &s.test}) all.insert(v->begin(), v->end());
  CHECK(all.size() == 100);
  CHECK(*all.rbegin() == 99);

  for (std::size_t n : {100u, 37u, 999u, 2000u}) {
    std::vector<std::pair<std::size_t, std::size_t>> k;
    for (std::size_t i = 0; i < n; ++i) k.emplace_back(rng() % 4, rng() % 16);
    auto sp = split_keys(k, {0.8, 0.1, 0.1}, 3);
    std::map<std::size_t, std::array<double, 3>> counts;
    std::map<std::size_t, double> totals;
    int which = 0;
    for (auto* v : {&sp.train, &sp.val, &sp.test}) {
      for (std::size_t i : *v) counts[k[i].first][which] += 1.0;
      ++which;
    }
    for (auto& [scen, c] : counts) totals[scen] = c[0] + c[1] + c[2];
    const double ratios[3] = {0.8, 0.1, 0.1};
    for (auto& [scen, c] : counts)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(c[j] - ratios[j] * totals[scen]) <= 1.0);
    CHECK(sp.train.size() + sp.val.size() + sp.test.size() == n);
  }

  auto again = split_keys(keys, {0.8, 0.1, 0.1}, 1);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(split_keys(keys, {0.8, 0.1, 0.1}, 2).train != s.train);
  CHECK_THROWS_AS(split_keys(keys, {0.8, 0.1, 0.2}, 1), ContractError);
}

TEST_CASE("split spreads each label across splits") {
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  for (std::size_t i = 0; i < 400; ++i) keys.emplace_back(0, i % 4);  // 100 per label
  auto s = split_keys(keys, {0.8, 0.1, 0.1}, 0);
  for (std::size_t label = 0; label < 4; ++label) {
    std::size_t in_val = 0;
    for (std::size_t i : s.val) in_val += keys[i].second == label;
    CHECK(in_val >= 9);
    CHECK(in_val <= 11);
  }
}
