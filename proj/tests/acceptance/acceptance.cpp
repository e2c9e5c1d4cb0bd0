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


// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "bevbeam/config.hpp"
#include "bevbeam/data.hpp"
#include "bevbeam/metrics.hpp"
#include "bevbeam/pipeline.hpp"
#include "bevbeam/training.hpp"
#include "gradcheck.hpp"
#include "tiny_config.hpp"

namespace fs = std::filesystem;
using namespace bevbeam;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kDbaOracleTol = 1e-12;
constexpr double kDbaOracleSeconds = 5.0;
constexpr double kWorkedTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr int kGradSeeds = 5;
constexpr double kRowSumTol = 1e-6;
constexpr int kNormForwards = 100;
constexpr double kCeTol = 1e-10;
constexpr double kFocalHalfTol = 1e-9;
constexpr double kRotationTol = 1e-6;
constexpr double kParsevalTol = 1e-9;
constexpr double kE2eMinDba = 0.85;
constexpr double kE2eBudgetMinutes = 45.0;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_workdir;

fs::path scratch(const std::string& name) {
  fs::path p = g_workdir / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// 1. DBA against a literal transcription of the metric

double brute_dba(const std::vector<std::vector<std::size_t>>& pred,
                 const std::vector<std::size_t>& labels, std::size_t K, double delta) {
  double total = 0.0;
  for (std::size_t k = 1; k <= K; ++k) {
    double miss = 0.0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
      double best = 1.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double d = std::fabs(double(pred[n][j]) - double(labels[n])) / delta;
        best = std::min(best, std::min(d, 1.0));
      }
      miss += best;
    }
    total += 1.0 - miss / double(labels.size());
  }
  return total / double(K);
}

Outcome criterion_dba_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> nd(1, 50), beam(0, 63);
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = nd(rng);
    std::vector<Ranking> pred(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::set<std::size_t> seen;
      while (pred[i].size() < 3) {
        const std::size_t b = beam(rng);
        if (seen.insert(b).second) pred[i].push_back(b);
      }
      labels[i] = beam(rng);
    }
    const double lib = dba_score(pred, labels, DbaConfig{3, 5.0});
    worst = std::max(worst, std::fabs(lib - brute_dba(pred, labels, 3, 5.0)));
  }
  const double secs = seconds_since(t0);
  o.require(worst < kDbaOracleTol, fmt("max diff %.3g", worst));
  o.require(secs < kDbaOracleSeconds, fmt("took %.2fs", secs));
  if (o.pass) o.detail = fmt("200 instances, max |diff| %.2g, %.3fs", worst, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Worked cases

Outcome criterion_worked_dba() {
  Outcome o;
  // m* = 10, Delta = 5. [15,10,12]: Y1 = 0, Y2 = 1, Y3 = 1 -> 2/3.
  // [12,13,14]: Y1 = Y2 = Y3 = 1 - 2/5 -> 0.6.
  const double a = dba_score({{15, 10, 12}}, {10}, DbaConfig{3, 5.0});
  const double b = dba_score({{12, 13, 14}}, {10}, DbaConfig{3, 5.0});
  o.require(std::fabs(a - 2.0 / 3.0) < kWorkedTol, fmt("[15,10,12] gave %.17g", a));
  o.require(std::fabs(b - 0.6) < kWorkedTol, fmt("[12,13,14] gave %.17g", b));
  if (o.pass) o.detail = fmt("%.15f and %.15f", a, b);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Gradient suite

using bevbeam::testing::grad_check;
using bevbeam::testing::grad_check_sampled;
using bevbeam::testing::random_array;
using bevbeam::testing::weighted_sum;

struct GradCase {
  std::string name;
  std::function<testing::GradCheckResult(std::uint64_t)> run;
};

std::vector<GradCase> grad_cases() {
  using testing::LossFn;
  std::vector<GradCase> cases;
  auto P = [](Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return parameter(random_array(std::move(s), rng, lo, hi));
  };
  cases.push_back({"add/mul broadcast", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({2, 3, 4}, rng), b = P({3, 4}, rng), c = P({2, 3, 4}, rng);
    return grad_check([&](Tape<double>& t) { return weighted_sum(t, mul(t, add(t, a, b), c), seed); },
                      {a, b, c});
  }});
  cases.push_back({"scale/scale_by", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({3, 5}, rng), s = P({1}, rng);
    return grad_check([&](Tape<double>& t) {
      return weighted_sum(t, scale_by(t, scale(t, a, -2.5), s), seed);
    }, {a, s});
  }});
  cases.push_back({"relu/gelu/tanh", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({4, 6}, rng);
    return grad_check_sampled([&](Tape<double>& t) {
      auto x = add(t, add(t, relu(t, a), gelu(t, a)), tanh_act(t, a));
      return weighted_sum(t, x, seed);
    }, {a}, 24, seed);
  }});
  cases.push_back({"sum/mean/mean_axis", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({2, 3, 4}, rng);
    return grad_check([&](Tape<double>& t) {
      auto m = weighted_sum(t, mean_axis(t, a, 1), seed);
      return add(t, add(t, m, mean(t, a)), scale(t, sum(t, mul(t, a, a)), 0.1));
    }, {a});
  }});
  cases.push_back({"reshape/permute/concat/slice", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({2, 3, 4}, rng), b = P({2, 2, 4}, rng);
    return grad_check([&](Tape<double>& t) {
      auto p = permute(t, reshape(t, a, {6, 4}), {1, 0});
      auto c = concat(t, {a, b}, 1);
      auto s = slice(t, c, 1, 1, 3);
      return add(t, weighted_sum(t, p, seed), weighted_sum(t, s, seed + 1));
    }, {a, b});
  }});
  cases.push_back({"matmul", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({2, 3, 4}, rng), b = P({4, 5}, rng), c = P({2, 6, 4}, rng);
    return grad_check([&](Tape<double>& t) {
      return add(t, weighted_sum(t, matmul(t, a, b), seed),
                 weighted_sum(t, matmul(t, a, c, true), seed + 1));
    }, {a, b, c});
  }});
  cases.push_back({"linear", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = P({2, 3, 4}, rng), w = P({5, 4}, rng), b = P({5}, rng);
    return grad_check([&](Tape<double>& t) { return weighted_sum(t, linear(t, x, w, b), seed); },
                      {x, w, b});
  }});
  cases.push_back({"conv2d", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = P({2, 3, 6, 5}, rng), w = P({4, 3, 3, 3}, rng), b = P({4}, rng);
    auto w1 = P({2, 3, 1, 1}, rng);
    return grad_check([&](Tape<double>& t) {
      auto y = conv2d(t, x, w, b, {2, 1});
      auto z = conv2d(t, x, w1, Tensor<double>{}, {1, 0});
      return add(t, weighted_sum(t, y, seed), weighted_sum(t, z, seed + 1));
    }, {x, w, b, w1});
  }});
  cases.push_back({"softmax", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto a = P({2, 3, 4}, rng, -3.0, 3.0);
    return grad_check([&](Tape<double>& t) {
      return add(t, weighted_sum(t, softmax(t, a, -1), seed), weighted_sum(t, softmax(t, a, 1), seed + 1));
    }, {a});
  }});
  cases.push_back({"layer_norm", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = P({3, 6}, rng), g = P({6}, rng), b = P({6}, rng);
    return grad_check([&](Tape<double>& t) { return weighted_sum(t, layer_norm(t, x, g, b), seed); },
                      {x, g, b});
  }});
  cases.push_back({"batch_norm", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = P({3, 2, 3, 3}, rng), g = P({2}, rng), b = P({2}, rng);
    auto r = grad_check([&](Tape<double>& t) {
      BatchNormState<double> st(2);
      return weighted_sum(t, batch_norm(t, x, g, b, st, Mode::train), seed);
    }, {x, g, b});
    BatchNormState<double> fixed(2);
    fixed.running_mean = random_array({2}, rng);
    fixed.running_var = random_array({2}, rng, 0.5, 2.0);
    auto e = grad_check([&](Tape<double>& t) {
      return weighted_sum(t, batch_norm(t, x, g, b, fixed, Mode::eval), seed);
    }, {x, g, b});
    r.max_rel_error = std::max(r.max_rel_error, e.max_rel_error);
    r.checked += e.checked;
    return r;
  }});
  cases.push_back({"bilinear_resize", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = P({1, 2, 4, 5}, rng);
    return grad_check([&](Tape<double>& t) { return weighted_sum(t, bilinear_resize(t, x, 7, 3), seed); },
                      {x});
  }});
  cases.push_back({"dropout (fixed mask)", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = P({4, 8}, rng);
    return grad_check([&](Tape<double>& t) {
      std::mt19937_64 mask_rng(seed + 77);
      return weighted_sum(t, dropout(t, x, 0.3, mask_rng, Mode::train), seed);
    }, {x});
  }});
  cases.push_back({"multi_head_attention", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto q = P({2, 3, 8}, rng), k = P({2, 5, 8}, rng), v = P({2, 5, 8}, rng);
    return grad_check([&](Tape<double>& t) {
      return weighted_sum(t, multi_head_attention(t, q, k, v, 2, nullptr), seed);
    }, {q, k, v});
  }});
  cases.push_back({"focal_loss", [=](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto logits = P({4, 6}, rng, -2.0, 2.0);
    std::vector<std::size_t> labels{0, 5, 2, 2};
    FocalLossConfig cfg;
    cfg.alpha = {0.5, 1.0, 1.5, 1.0, 0.8, 1.2};
    return grad_check([&](Tape<double>& t) {
      return focal_loss(t, softmax(t, logits, -1), labels, cfg);
    }, {logits});
  }});
  cases.push_back({"full model (grid 8, C_bev 16, M 8, T 5)", [=](std::uint64_t seed) {
    auto cfg = testing::tiny_config();
    cfg.head_dropout = 0.0;
    ModelParams<double> params(cfg, seed);
    params.gate.mutable_value()[0] = 0.3;
    auto batch = testing::random_batch(cfg, 2, 500 + seed);
    std::vector<Tensor<double>> inputs;
    for (auto& [name, t] : params.named_parameters()) inputs.push_back(t);
    return grad_check_sampled([&](Tape<double>& t) {
      ForwardOptions opt;
      opt.mode = Mode::train;
      return weighted_sum(t, forward_full(t, params, batch, opt).probs, seed);
    }, inputs, 24, seed);
  }});
  return cases;
}

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  for (const auto& c : grad_cases()) {
    for (int seed = 0; seed < kGradSeeds; ++seed) {
      const auto r = c.run(static_cast<std::uint64_t>(seed));
      checked += r.checked;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_name = c.name;
      }
      o.require(r.max_rel_error < kGradTol && r.checked > 0,
                fmt("%s seed %d rel err %.3g", c.name.c_str(), seed, r.max_rel_error));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < kGradSeconds, fmt("took %.1fs", secs));
  if (o.pass)
    o.detail = fmt("%zu cases x %d seeds, %zu coordinates, worst %.2g (%s), %.1fs",
                   grad_cases().size(), kGradSeeds, checked, worst, worst_name.c_str(), secs);
  return o;
}

// ---------------------------------------------------------------------------
// 4. Row-stochastic outputs

double worst_row_error(const Array<double>& a) {
  const std::size_t n = a.shape.back();
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size() / n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(a[r * n + j] >= 0.0)) return std::numeric_limits<double>::infinity();
      s += a[r * n + j];
    }
    worst = std::max(worst, std::fabs(s - 1.0));
  }
  return worst;
}

Outcome criterion_normalization() {
  Outcome o;
  auto cfg = testing::tiny_config();
  double worst = 0.0;
  std::size_t rows = 0;
  for (int i = 0; i < kNormForwards; ++i) {
    ModelParams<float> params(cfg, 1000 + i);
    params.gate.mutable_value()[0] = 0.5f;
    auto batch = testing::random_batch(cfg, 2, 3000 + i);
    std::mt19937_64 rng(i);
    AttentionProbe probe;
    ForwardOptions opt;
    opt.mode = i % 2 ? Mode::train : Mode::eval;
    opt.rng = &rng;
    opt.probe = &probe;
    Tape<float> tape(false);
    auto r = forward_full(tape, params, batch, opt);
    auto probs = r.probs.value().cast<double>();
    worst = std::max(worst, worst_row_error(probs));
    rows += probs.shape[0];
    for (const auto* group : {&probe.camera, &probe.temporal})
      for (const auto& a : *group) {
        worst = std::max(worst, worst_row_error(a));
        rows += a.size() / a.shape.back();
      }
    o.require(!probe.camera.empty() && !probe.temporal.empty(), "attention probe empty");
  }
  o.require(worst < kRowSumTol, fmt("worst |row sum - 1| %.3g", worst));
  if (o.pass) o.detail = fmt("%d forwards, %zu rows, worst |sum-1| %.2g", kNormForwards, rows, worst);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Focal loss reductions

Outcome criterion_focal() {
  Outcome o;
  std::mt19937_64 rng(5);
  double worst_ce = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = 6, M = 7;
    Array<double> p({B, M});
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<std::size_t> labels(B);
    for (std::size_t b = 0; b < B; ++b) {
      double s = 0.0;
      for (std::size_t m = 0; m < M; ++m) s += (p[b * M + m] = u(rng));
      for (std::size_t m = 0; m < M; ++m) p[b * M + m] /= s;
      labels[b] = rng() % M;
    }
    FocalLossConfig cfg;
    cfg.gamma = 0.0;
    cfg.alpha.assign(M, 1.0);
    Tape<double> t(false);
    const double fl = focal_loss(t, constant(p), labels, cfg).value()[0];
    double ce = 0.0;
    for (std::size_t b = 0; b < B; ++b) ce -= std::log(p[b * M + labels[b]]);
    worst_ce = std::max(worst_ce, std::fabs(fl - ce / B));
  }
  FocalLossConfig half;
  half.gamma = 2.0;
  half.alpha = {1.0, 1.0};
  Tape<double> t(false);
  const double v = focal_loss(t, constant(Array<double>({1, 2}, {0.5, 0.5})), {0}, half).value()[0];
  const double diff = std::fabs(v - 0.25 * std::numbers::ln2);
  o.require(worst_ce < kCeTol, fmt("CE diff %.3g", worst_ce));
  o.require(diff < kFocalHalfTol, fmt("p=0.5 case diff %.3g", diff));
  if (o.pass) o.detail = fmt("CE diff %.2g, 0.25 ln2 diff %.2g", worst_ce, diff);
  return o;
}

// ---------------------------------------------------------------------------
// 6. Gate at zero

template <class T>
bool bit_equal(const Array<T>& a, const Array<T>& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(T)) == 0;
}

Outcome criterion_gate() {
  Outcome o;
  auto cfg = testing::tiny_config();
  int checked = 0;
  for (int seed = 0; seed < 5; ++seed) {
    ModelParams<float> params(cfg, 40 + seed);
    o.require(params.gate.value()[0] == 0.0f, "gate not initialized to 0");
    auto batch = testing::random_batch(cfg, 3, 90 + seed);
    for (Mode mode : {Mode::eval, Mode::train}) {
      std::mt19937_64 rng(seed);
      ForwardOptions opt;
      opt.mode = mode;
      opt.rng = &rng;
      Tape<float> tape(false);
      auto r = forward_full(tape, params, batch, opt);
      o.require(r.h_gps.defined(), "GPS MLP pathway inactive");
      o.require(bit_equal(r.z_aug.value(), r.z_final.value()), fmt("seed %d z_aug != z_final", seed));
      ++checked;
    }
  }
  if (o.pass) o.detail = fmt("%d forwards bit-identical", checked);
  return o;
}

// ---------------------------------------------------------------------------
// 7. Preprocessing oracles

std::size_t cell_oracle(double d, double extent, std::size_t cells) {
  double u = (d + extent) / (2.0 * extent) * double(cells - 1);
  u = std::min(std::max(u, 0.0), double(cells - 1));
  return static_cast<std::size_t>(std::floor(u));
}

Outcome criterion_preprocess() {
  Outcome o;
  // GPS grid mapping
  const BevGridSpec g128{50.0, 128, 128};
  struct Case {
    double dx, dy;
    std::size_t r, c;
  };
  for (const Case& k : {Case{0, 0, 63, 63}, Case{-50, -50, 0, 0}, Case{100, 100, 127, 127},
                        Case{50, -50, 0, 127}, Case{-1e6, 1e6, 127, 0}, Case{49.999, 0, 63, 126}}) {
    const GridCell cell = gps_cell({k.dx, k.dy}, g128);
    o.require(cell.row == k.r && cell.col == k.c,
              fmt("gps (%g,%g) -> (%zu,%zu), want (%zu,%zu)", k.dx, k.dy, cell.row, cell.col, k.r, k.c));
  }
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> wide(-80.0, 80.0);
  for (int i = 0; i < 2000; ++i) {
    const BevGridSpec g{25.0, 8 + rng() % 40, 8 + rng() % 40};
    const GpsReading r{wide(rng), wide(rng)};
    const GridCell c = gps_cell(r, g);
    if (c.col != cell_oracle(r.dx, g.extent, g.width) || c.row != cell_oracle(r.dy, g.extent, g.height)) {
      o.require(false, fmt("gps (%g,%g) mismatch", r.dx, r.dy));
      break;
    }
    const auto mask = gps_to_mask(r, g);
    double s = 0.0;
    for (float v : mask.data) s += v;
    if (s != 1.0) o.require(false, "mask does not sum to 1");
  }

  // Rotation isometry
  double rot_err = 0.0;
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < 1000; ++i) {
    const ScenarioCalibration cal{ang(rng)};
    const GpsReading a{wide(rng), wide(rng)}, b{wide(rng), wide(rng)};
    const GpsReading ra = calibrate_gps(a, cal), rb = calibrate_gps(b, cal);
    rot_err = std::max(rot_err, std::fabs(std::hypot(ra.dx, ra.dy) - std::hypot(a.dx, a.dy)));
    rot_err = std::max(rot_err, std::fabs(std::hypot(ra.dx - rb.dx, ra.dy - rb.dy) -
                                          std::hypot(a.dx - b.dx, a.dy - b.dy)));
    const double cross = a.dx * ra.dy - a.dy * ra.dx, dot = a.dx * ra.dx + a.dy * ra.dy;
    if (std::hypot(a.dx, a.dy) > 1.0) {
      double turn = std::atan2(cross, dot) - cal.theta_offset;
      turn = std::remainder(turn, 2.0 * std::numbers::pi);
      rot_err = std::max(rot_err, std::fabs(turn));
    }
  }
  o.require(rot_err < kRotationTol, fmt("rotation error %.3g", rot_err));

  // LiDAR aggregation against a per-point loop
  std::size_t lidar_cells = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const BevGridSpec grid{20.0, 8 + rng() % 10, 8 + rng() % 10};
    std::uniform_real_distribution<float> xy(-25.0f, 25.0f), z(-1.0f, 3.0f), in(0.0f, 1.0f);
    PointCloud cloud;
    for (int i = 0; i < 500; ++i) cloud.points.push_back({xy(rng), xy(rng), z(rng), in(rng)});
    const auto fast = lidar_to_bev(cloud, grid, LidarChannels::height_intensity_density);
    const std::size_t H = grid.height, W = grid.width;
    std::vector<float> h(H * W, 0.0f), e(H * W, 0.0f), d(H * W, 0.0f);
    std::vector<bool> hit(H * W, false);
    const double cw = 2.0 * grid.extent / double(W), ch = 2.0 * grid.extent / double(H);
    for (const auto& p : cloud.points) {
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          const double x0 = -grid.extent + double(c) * cw, y0 = -grid.extent + double(r) * ch;
          if (!(p.x >= x0 && p.x < x0 + cw && p.y >= y0 && p.y < y0 + ch)) continue;
          const std::size_t i = r * W + c;
          h[i] = hit[i] ? std::max(h[i], p.z) : p.z;
          e[i] = hit[i] ? std::max(e[i], p.intensity) : p.intensity;
          d[i] += 1.0f;
          hit[i] = true;
        }
    }
    for (std::size_t i = 0; i < H * W; ++i) {
      if (fast[i] != h[i] || fast[H * W + i] != e[i] || fast[2 * H * W + i] != d[i]) {
        o.require(false, fmt("lidar cell %zu differs", i));
        break;
      }
    }
    lidar_cells += H * W;
  }

  // Parseval
  double parseval = 0.0;
  for (std::size_t n : {1u, 2u, 7u, 16u, 30u, 64u, 100u}) {
    std::vector<complex64> x(n);
    std::normal_distribution<float> nd;
    double energy = 0.0;
    for (auto& v : x) {
      v = {nd(rng), nd(rng)};
      energy += std::norm(std::complex<double>(v));
    }
    const auto p = fft_power(x);
    double spectrum = 0.0;
    for (double v : p.data) spectrum += v;
    parseval = std::max(parseval, std::fabs(spectrum / double(n) - energy) / std::max(1.0, energy));
  }
  o.require(parseval < kParsevalTol, fmt("Parseval rel err %.3g", parseval));
  if (o.pass)
    o.detail = fmt("grid cases exact, rotation err %.2g, %zu lidar cells exact, Parseval %.2g",
                   rot_err, lidar_cells, parseval);
  return o;
}

// ---------------------------------------------------------------------------
// 8. Flip involution

SyntheticScenarioConfig small_scene(std::size_t beams, std::size_t image) {
  SyntheticScenarioConfig sc;
  sc.codebook = {beams, 90.0};
  sc.image_size = image;
  sc.vehicle_points = 60;
  sc.clutter_points = 40;
  return sc;
}

Outcome criterion_flip() {
  Outcome o;
  std::size_t samples = 0;
  for (std::size_t M : {8u, 64u}) {
    auto cfg = testing::tiny_config();
    cfg.beams = M;
    const auto sc = small_scene(M, 32);
    for (std::size_t i = 0; i < 6; ++i) {
      const PreparedSample s = prepare_sample(synthesize_sequence(sc, i), cfg);
      const PreparedSample f = flip_augment(s);
      const PreparedSample ff = flip_augment(f);
      o.require(ff == s, fmt("M=%zu sample %zu: flip twice differs", M, i));
      o.require(f.label == M - 1 - s.label, fmt("M=%zu label %zu -> %zu", M, s.label, f.label));
      o.require(f.gps[0] == -s.gps[0] && f.gps[1] == s.gps[1], "GPS dx not negated");
      ++samples;
    }
    for (std::size_t m = 0; m < M; ++m) {
      PreparedSample s = prepare_sample(synthesize_sequence(sc, 0), cfg);
      s.label = m;
      if (flip_augment(s).label != M - 1 - m) o.require(false, fmt("label map M=%zu m=%zu", M, m));
    }
  }
  if (o.pass) o.detail = fmt("%zu samples, label maps for M in {8, 64}", samples);
  return o;
}

// ---------------------------------------------------------------------------
// 12. Formats

Outcome criterion_formats() {
  Outcome o;
  const fs::path dir = scratch("formats");
  std::mt19937_64 rng(12);
  // tensor container, including non-finite and signed-zero payloads
  Array<float> f({2, 3, 4});
  for (auto& v : f.data) v = std::uniform_real_distribution<float>(-1e6f, 1e6f)(rng);
  f[0] = -0.0f;
  f[1] = std::numeric_limits<float>::infinity();
  f[2] = std::numeric_limits<float>::quiet_NaN();
  f[3] = std::numeric_limits<float>::denorm_min();
  Array<double> d({5});
  for (auto& v : d.data) v = std::normal_distribution<double>()(rng);
  Array<std::uint8_t> u({3, 3});
  for (auto& v : u.data) v = static_cast<std::uint8_t>(rng());
  Array<complex64> c({2, 2});
  for (auto& v : c.data) v = {float(rng() % 100) - 50.0f, -1.5f};
  save_tensor(dir / "f.bvt", f);
  save_tensor(dir / "d.bvt", d);
  save_tensor(dir / "u.bvt", u);
  save_tensor(dir / "c.bvt", c);
  save_tensor(dir / "s.bvt", Array<float>::scalar(3.5f));
  o.require(bit_equal(load_tensor<float>(dir / "f.bvt"), f), "f32 round trip");
  o.require(bit_equal(load_tensor<double>(dir / "d.bvt"), d), "f64 round trip");
  o.require(bit_equal(load_tensor<std::uint8_t>(dir / "u.bvt"), u), "u8 round trip");
  o.require(bit_equal(load_tensor<complex64>(dir / "c.bvt"), c), "c64 round trip");
  o.require(bit_equal(load_tensor<float>(dir / "s.bvt"), Array<float>::scalar(3.5f)), "scalar round trip");

  // corrupt magic: every single-byte mutation of the four magic bytes is rejected
  const std::string bytes = read_file(dir / "f.bvt");
  int rejected = 0, mutations = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (int flip : {0x01, 0x20, 0x80, 0xFF}) {
      std::string bad = bytes;
      bad[i] = static_cast<char>(bad[i] ^ flip);
      write_file(dir / "bad.bvt", bad);
      ++mutations;
      try {
        (void)load_tensor<float>(dir / "bad.bvt");
      } catch (const FormatError&) {
        ++rejected;
      }
    }
  o.require(rejected == mutations, fmt("%d of %d magic mutations rejected", rejected, mutations));

  // checkpoint: parameters, buffers and optimizer moments
  auto cfg = testing::tiny_config();
  ModelParams<float> a(cfg, 3);
  TrainState st;
  st.seed = 99;
  st.epoch = 4;
  st.best_val_dba = 0.8125;
  st.adam.step = 17;
  for (auto& [name, t] : a.named_parameters()) {
    for (auto& v : t.mutable_value().data) v += 0.01f * float(rng() % 7);
    st.adam.m.push_back(random_array(t.shape(), rng).cast<float>());
    st.adam.v.push_back(random_array(t.shape(), rng, 0.0, 1.0).cast<float>());
  }
  for (auto& [name, buf] : a.named_buffers())
    for (auto& v : buf->data) v = float(rng() % 1000) / 7.0f;
  save_checkpoint(dir / "ckpt", a, st);
  ModelParams<float> b(cfg, 4);
  const TrainState back = load_checkpoint(dir / "ckpt", b);
  auto pa = a.named_parameters(), pb = b.named_parameters();
  bool params_ok = pa.size() == pb.size();
  for (std::size_t i = 0; params_ok && i < pa.size(); ++i)
    params_ok = pa[i].first == pb[i].first && bit_equal(pa[i].second.value(), pb[i].second.value());
  auto ba = a.named_buffers(), bb = b.named_buffers();
  bool buffers_ok = ba.size() == bb.size() && !ba.empty();
  for (std::size_t i = 0; buffers_ok && i < ba.size(); ++i) buffers_ok = bit_equal(*ba[i].second, *bb[i].second);
  bool moments_ok = back.adam.step == st.adam.step && back.adam.m.size() == st.adam.m.size() &&
                    back.adam.v.size() == st.adam.v.size();
  for (std::size_t i = 0; moments_ok && i < st.adam.m.size(); ++i)
    moments_ok = bit_equal(back.adam.m[i], st.adam.m[i]) && bit_equal(back.adam.v[i], st.adam.v[i]);
  o.require(params_ok, "checkpoint parameters differ");
  o.require(buffers_ok, "checkpoint buffers differ");
  o.require(moments_ok, "optimizer state differs");
  o.require(back.seed == st.seed && back.epoch == st.epoch && back.best_val_dba == st.best_val_dba,
            "train state differs");
  if (o.pass)
    o.detail = fmt("4 dtypes bit-exact, %d/%d magic mutations rejected, checkpoint of %zu tensors bit-exact",
                   rejected, mutations, pa.size());
  return o;
}

// ---------------------------------------------------------------------------
// Shared training helpers for 9-11

struct Experiment {
  RunConfig cfg;
  Dataset ds;
  DatasetSplit split;
};

Experiment make_experiment(const RunConfig& cfg, const fs::path& data) {
  Experiment e{cfg, generate_synthetic(cfg.synthetic_config(), data), {}};
  e.split = split_dataset(e.ds, {cfg.train_ratio, cfg.val_ratio, cfg.test_ratio}, cfg.split_seed);
  return e;
}

std::vector<std::size_t> labels_of(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  for (std::size_t i : idx) out.push_back(ds.entry(i).label);
  return out;
}

struct TrainOutcome {
  double test_dba = 0.0;
  std::vector<EpochMetrics> log;
  double seconds = 0.0;
};

/// Trains, restores the best checkpoint and scores the test split.
TrainOutcome train_and_test(const Experiment& e, const fs::path& out, const ForwardOptions& fwd,
                            bool verbose) {
  const auto t0 = Clock::now();
  TrainConfig tc = e.cfg.train_config();
  tc.forward = fwd;
  tc.checkpoint_dir = out / "checkpoint";
  tc.log_path = out / "train_log.csv";
  Trainer trainer(tc, [&](std::size_t i) { return e.ds.load(i); }, e.split.train,
                  labels_of(e.ds, e.split.train), e.split.val);
  TrainOutcome r;
  r.log = trainer.fit([&](const EpochMetrics& m) {
    if (verbose) {
      std::printf("    epoch %zu lr %.3g loss %.4f train_dba %.4f val_dba %.4f (%.0fs)\n", m.epoch, m.lr,
                  m.train_loss, m.train_dba, m.val_dba, m.wall_time_s);
      std::fflush(stdout);
    }
  });
  ModelParams<float> best(e.cfg.model, 0);
  load_checkpoint(tc.checkpoint_dir, best);
  const auto model = e.cfg.model;
  auto inf = run_inference(
      best, [&](std::size_t i) { return prepare_sample(e.ds.load(i), model); }, e.split.test, fwd,
      e.cfg.eval_batch);
  r.test_dba = dba_score(inf.rankings(e.cfg.dba_k), inf.labels, e.cfg.dba());
  r.seconds = seconds_since(t0);
  return r;
}

/// Calibrated t=1,2 readings as rows [dx1, dy1, dx2, dy2].
Array<float> gps_rows(const Experiment& e, const std::vector<std::size_t>& idx) {
  Array<float> out({idx.size(), 4});
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const SampleSequence s = e.ds.load(idx[n]);
    for (std::size_t t = 0; t < 2; ++t) {
      const GpsReading g = calibrate_gps(s.gps[t], {s.theta_offset});
      out[n * 4 + 2 * t] = static_cast<float>(g.dx);
      out[n * 4 + 2 * t + 1] = static_cast<float>(g.dy);
    }
  }
  return out;
}

double gps_baseline_dba(const Experiment& e) {
  GpsBaselineConfig gc;
  gc.seed = e.cfg.seed;
  const auto model = train_gps_baseline(gps_rows(e, e.split.train), labels_of(e.ds, e.split.train),
                                        e.cfg.model.beams, e.cfg.model.grid_extent, gc);
  const Array<float> probs = gps_baseline_probs(model, gps_rows(e, e.split.test));
  std::vector<Ranking> ranks;
  const std::size_t M = e.cfg.model.beams;
  for (std::size_t n = 0; n < e.split.test.size(); ++n)
    ranks.push_back(rank_beams(probs.data.data() + n * M, M, e.cfg.dba_k));
  return dba_score(ranks, labels_of(e.ds, e.split.test), e.cfg.dba());
}

// ---------------------------------------------------------------------------
// 9. End-to-end learning at the desk configuration

// Epoch budget and optimizer settings chosen to fit the wall-time budget on a
// single core; the cosine schedule spans exactly these epochs.
constexpr std::size_t kDeskEpochs = 4;
constexpr double kDeskLr = 1e-3;

RunConfig desk_config() {
  RunConfig c;
  c.merge_text(
      "grid_cells = 32\n"
      "c_bev = 64\n"
      "beams = 16\n"
      "sequences = 2000\n"
      "camera_size = 64\n"
      "image_size = 64\n"
      "c_back = 64\n"
      "cam_layers = 2\n"
      "temporal_layers = 2\n"
      "gps_hidden = 64\n"
      "head_hidden = 128\n");
  c.optim.epochs = kDeskEpochs;
  c.optim.lr = kDeskLr;
  c.validate();
  return c;
}

Outcome criterion_end_to_end() {
  Outcome o;
  const auto t0 = Clock::now();
  const fs::path dir = scratch("end_to_end");
  const Experiment e = make_experiment(desk_config(), dir / "data");
  std::printf("    %zu sequences generated in %.1fs; train %zu, val %zu, test %zu\n", e.ds.size(),
              seconds_since(t0), e.split.train.size(), e.split.val.size(), e.split.test.size());
  std::fflush(stdout);
  const TrainOutcome t = train_and_test(e, dir / "run", ForwardOptions{}, true);
  const double random_dba = random_baseline_dba(labels_of(e.ds, e.split.test), e.cfg.model.beams, e.cfg.dba());
  const double gps_dba = gps_baseline_dba(e);
  const double minutes = seconds_since(t0) / 60.0;
  o.require(t.test_dba >= kE2eMinDba, fmt("test DBA %.4f < %.2f", t.test_dba, kE2eMinDba));
  o.require(t.test_dba > random_dba, fmt("not above random baseline %.4f", random_dba));
  o.require(t.test_dba > gps_dba, fmt("not above GPS-only baseline %.4f", gps_dba));
  o.require(minutes < kE2eBudgetMinutes, fmt("wall time %.1f min", minutes));
  const std::string summary =
      fmt("test DBA %.4f (random %.4f, GPS-only %.4f), %zu epochs, %.1f min on %u hardware threads",
          t.test_dba, random_dba, gps_dba, t.log.size(), minutes, std::thread::hardware_concurrency());
  o.detail = o.pass ? summary : o.detail + " | " + summary;
  return o;
}

// ---------------------------------------------------------------------------
// 10. Ablation ordering

constexpr std::size_t kAblationSeeds = 3;

RunConfig small_config(std::uint64_t seed) {
  RunConfig c;
  c.merge_text(
      "grid_cells = 16\n"
      "c_bev = 32\n"
      "beams = 16\n"
      "sequences = 800\n"
      "camera_size = 32\n"
      "image_size = 32\n"
      "c_back = 32\n"
      "cam_layers = 1\n"
      "temporal_layers = 1\n"
      "gps_hidden = 32\n"
      "head_hidden = 64\n"
      "epochs = 10\n"
      "lr = 0.001\n");
  c.seed = seed;
  c.validate();
  return c;
}

Outcome criterion_ablation() {
  Outcome o;
  const auto t0 = Clock::now();
  std::map<std::string, double> mean;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < kAblationSeeds; ++seed) {
    const fs::path dir = scratch("ablation_" + std::to_string(seed));
    const Experiment e = make_experiment(small_config(seed), dir / "data");
    train_and_test(e, dir / "run", ForwardOptions{}, false);
    ModelParams<float> params(e.cfg.model, 0);
    load_checkpoint(dir / "run" / "checkpoint", params);
    const auto model = e.cfg.model;
    const SampleLoader load = [&](std::size_t i) { return prepare_sample(e.ds.load(i), model); };
    std::map<std::string, double> dba;
    for (AblationMode mode : {AblationMode::full, AblationMode::single_frame, AblationMode::mean_pool}) {
      const std::string name = ablation_name(mode);
      dba[name] = ablation_run(params, load, e.split.test, mode, e.cfg.dba(), e.cfg.eval_batch).overall.dba;
      mean[name] += dba[name] / kAblationSeeds;
    }
    o.require(dba["full"] >= dba["single_frame"],
              fmt("seed %llu: full %.4f < single_frame %.4f", static_cast<unsigned long long>(seed),
                  dba["full"], dba["single_frame"]));
    o.require(dba["full"] >= dba["mean_pool"],
              fmt("seed %llu: full %.4f < mean_pool %.4f", static_cast<unsigned long long>(seed), dba["full"],
                  dba["mean_pool"]));
    per_seed += fmt(" seed %llu: full %.4f single_frame %.4f mean_pool %.4f;",
                    static_cast<unsigned long long>(seed), dba["full"], dba["single_frame"], dba["mean_pool"]);
  }
  std::printf("   %s\n", per_seed.c_str());
  const std::string summary = fmt("3-seed mean test DBA: full %.4f, single_frame %.4f, mean_pool %.4f (%.0fs)",
                                  mean["full"], mean["single_frame"], mean["mean_pool"], seconds_since(t0));
  o.detail = o.pass ? summary : o.detail + " | " + summary;
  return o;
}

// ---------------------------------------------------------------------------
// 11. Determinism

std::string file_digest(const fs::path& root, const std::set<std::string>& skip = {}) {
  std::vector<fs::path> files;
  for (const auto& f : fs::recursive_directory_iterator(root))
    if (f.is_regular_file() && !skip.count(f.path().filename().string())) files.push_back(f.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  };
  for (const auto& f : files) {
    mix(fs::relative(f, root).string());
    mix(read_file(f));
  }
  return fmt("%016llx", static_cast<unsigned long long>(h));
}

/// Log text without the wall_time_s column.
std::string log_without_wall_time(const fs::path& path) {
  std::ifstream in(path);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome criterion_determinism() {
  Outcome o;
  RunConfig cfg;
  cfg.merge_text(
      "grid_cells = 8\nc_bev = 16\nbeams = 8\nsequences = 40\ncamera_size = 32\nimage_size = 32\n"
      "c_back = 16\ncam_layers = 1\ntemporal_layers = 1\ngps_hidden = 8\nhead_hidden = 16\n"
      "epochs = 3\nlr = 0.001\nseed = 11\n");
  cfg.validate();
  std::string index_hash[2], data_hash[2], log[2], raw_log[2], params[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = scratch("determinism_" + std::to_string(run));
    const Experiment e = make_experiment(cfg, dir / "data");
    index_hash[run] = file_digest(dir / "data", {"run_config.txt"});
    data_hash[run] = read_file(dir / "data" / "index.csv");
    train_and_test(e, dir / "run", ForwardOptions{}, false);
    log[run] = log_without_wall_time(dir / "run" / "train_log.csv");
    raw_log[run] = read_file(dir / "run" / "train_log.csv");
    params[run] = file_digest(dir / "run" / "checkpoint");
  }
  o.require(index_hash[0] == index_hash[1] && data_hash[0] == data_hash[1], "dataset hashes differ");
  o.require(log[0] == log[1], "training logs differ outside wall_time_s");
  o.require(params[0] == params[1], "checkpoints differ");
  const bool raw_same = raw_log[0] == raw_log[1];
  if (o.pass)
    o.detail = fmt("dataset hash %s twice; logs identical except wall_time_s (raw logs %s); checkpoint hash %s",
                   index_hash[0].c_str(), raw_same ? "identical" : "differ only in timing", params[0].c_str());
  return o;
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevbeam acceptance criteria"};
  std::vector<int> only;
  std::vector<int> skip;
  std::string workdir = (fs::temp_directory_path() / "bevbeam_acceptance").string();
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--skip", skip, "criteria to leave out")->delimiter(',');
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  g_workdir = workdir;
  apply_thread_limit();

  const std::vector<Criterion> all{
      {1, "DBA oracle equivalence", criterion_dba_oracle},
      {2, "worked DBA cases", criterion_worked_dba},
      {3, "gradient suite", criterion_gradients},
      {4, "normalization invariants", criterion_normalization},
      {5, "focal-loss reductions", criterion_focal},
      {6, "gate identity at s = 0", criterion_gate},
      {7, "preprocessing oracles", criterion_preprocess},
      {8, "flip involution", criterion_flip},
      {9, "end-to-end synthetic learning", criterion_end_to_end},
      {10, "ablation ordering", criterion_ablation},
      {11, "determinism", criterion_determinism},
      {12, "format round trip", criterion_formats},
  };
  int failed = 0, ran = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    if (std::find(skip.begin(), skip.end(), c.id) != skip.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    ++ran;
    failed += !o.pass;
    std::printf("criterion %2d %-30s %s  %s  [%.1fs]\n", c.id, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
