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

#include "bevbeam/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bevbeam/errors.hpp"

namespace bevbeam {

namespace fs = std::filesystem;

void DbaConfig::validate() const {
  if (k < 1) throw ContractError("DBA: K must be at least 1");
  if (!(delta >= 1.0)) throw ContractError("DBA: delta must be at least 1");
}

std::vector<double> dba_curve(const std::vector<Ranking>& predictions,
                              const std::vector<std::size_t>& labels, const DbaConfig& cfg) {
  cfg.validate();
  if (predictions.size() != labels.size()) {
    throw ContractError("DBA: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("DBA: no samples");
  std::vector<double> miss(cfg.k, 0.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const Ranking& r = predictions[n];
    if (r.size() < cfg.k) {
      throw ContractError("DBA: prediction list " + std::to_string(n) + " has " +
                          std::to_string(r.size()) + " entries, need " + std::to_string(cfg.k));
    }
    double best = 1.0;
    for (std::size_t j = 0; j < cfg.k; ++j) {
      const double d = std::abs(double(r[j]) - double(labels[n])) / cfg.delta;
      best = std::min(best, std::min(d, 1.0));
      miss[j] += best;
    }
  }
  for (double& m : miss) m = 1.0 - m / double(labels.size());
  return miss;
}

double dba_score(const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
                 const DbaConfig& cfg) {
  const auto y = dba_curve(predictions, labels, cfg);
  return std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
}

double topk_accuracy(const std::vector<Ranking>& predictions,
                     const std::vector<std::size_t>& labels, std::size_t k) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw ContractError("top-k: predictions and labels must be non-empty and aligned");
  }
  std::size_t hits = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (predictions[n].size() < k) throw ContractError("top-k: prediction list shorter than k");
    hits += std::find(predictions[n].begin(), predictions[n].begin() + k, labels[n]) !=
            predictions[n].begin() + k;
  }
  return double(hits) / double(labels.size());
}

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& top1,
                                 const std::vector<std::size_t>& labels, std::size_t beams) {
  if (top1.size() != labels.size()) throw ContractError("confusion: size mismatch");
  ConfusionMatrix c{beams, std::vector<std::size_t>(beams * beams, 0)};
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= beams || top1[n] >= beams) throw ContractError("confusion: index outside codebook");
    ++c.counts[labels[n] * beams + top1[n]];
  }
  return c;
}

namespace {

ScopeMetrics scope_metrics(const std::vector<Ranking>& p, const std::vector<std::size_t>& l,
                           const DbaConfig& cfg) {
  ScopeMetrics m;
  m.samples = l.size();
  m.y = dba_curve(p, l, cfg);
  m.dba = std::accumulate(m.y.begin(), m.y.end(), 0.0) / double(m.y.size());
  for (std::size_t k = 1; k <= 3; ++k) m.topk.push_back(topk_accuracy(p, l, k));
  return m;
}

}  // namespace

DbaReport build_report(const std::vector<Ranking>& predictions,
                       const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& scenarios, std::size_t beams,
                       const DbaConfig& cfg, std::string mode) {
  if (scenarios.size() != labels.size()) throw ContractError("report: scenario list misaligned");
  DbaReport r;
  r.mode = std::move(mode);
  r.overall = scope_metrics(predictions, labels, cfg);
  std::map<std::size_t, std::pair<std::vector<Ranking>, std::vector<std::size_t>>> groups;
  std::vector<std::size_t> top1;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    groups[scenarios[n]].first.push_back(predictions[n]);
    groups[scenarios[n]].second.push_back(labels[n]);
    top1.push_back(predictions[n].front());
  }
  for (const auto& [scen, g] : groups) r.per_scenario[scen] = scope_metrics(g.first, g.second, cfg);
  r.confusion = confusion_matrix(top1, labels, beams);
  return r;
}

namespace {

double binomial(std::size_t n, std::size_t r) {
  if (r > n) return 0.0;
  r = std::min(r, n - r);
  double v = 1.0;
  for (std::size_t i = 1; i <= r; ++i) v = v * double(n - r + i) / double(i);
  return v;
}

}  // namespace

double random_baseline_dba(const std::vector<std::size_t>& labels, std::size_t beams,
                           const DbaConfig& cfg) {
  cfg.validate();
  if (labels.empty()) throw ContractError("random baseline: no labels");
  if (cfg.k > beams) throw ContractError("random baseline: K exceeds the codebook size");
  double total = 0.0;
  std::vector<double> cost(beams);
  for (std::size_t label : labels) {
    if (label >= beams) throw ContractError("random baseline: label outside codebook");
    for (std::size_t m = 0; m < beams; ++m) {
      cost[m] = std::min(std::abs(double(m) - double(label)) / cfg.delta, 1.0);
    }
    std::sort(cost.begin(), cost.end());
    double dba = 0.0;
    for (std::size_t k = 1; k <= cfg.k; ++k) {
      // P(min of k distinct draws is the i-th smallest) = C(M-i, k-1) / C(M, k)
      const double denom = binomial(beams, k);
      double expected = 0.0;
      for (std::size_t i = 1; i <= beams - k + 1; ++i) {
        expected += cost[i - 1] * binomial(beams - i, k - 1) / denom;
      }
      dba += 1.0 - expected;
    }
    total += dba / double(cfg.k);
  }
  return total / double(labels.size());
}

Ranking rank_beams(const float* probs, std::size_t beams, std::size_t k) {
  Ranking order(beams);
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, beams);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
                    });
  order.resize(k);
  return order;
}

std::vector<Ranking> InferenceResult::rankings(std::size_t k) const {
  std::vector<Ranking> out;
  const std::size_t m = probs.shape.at(1);
  for (std::size_t n = 0; n < labels.size(); ++n) out.push_back(rank_beams(probs.ptr() + n * m, m, k));
  return out;
}

InferenceResult run_inference(ModelParams<float>& params, const SampleLoader& load,
                              const std::vector<std::size_t>& indices, ForwardOptions opts,
                              std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("inference: batch size must be positive");
  opts.mode = Mode::eval;
  const std::size_t m = params.config.beams;
  InferenceResult r;
  r.probs = Array<float>(Shape{indices.size(), m});
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    std::vector<PreparedSample> samples;
    for (std::size_t i = start; i < end; ++i) samples.push_back(load(indices[i]));
    for (const auto& s : samples) {
      r.seq_ids.push_back(s.seq_id);
      r.labels.push_back(s.label);
      r.scenarios.push_back(s.scenario_id);
    }
    Tape<float> tape(false);
    auto out = forward_full(tape, params, collate(samples), opts);
    std::copy(out.probs.value().data.begin(), out.probs.value().data.end(),
              r.probs.data.begin() + start * m);
  }
  return r;
}

namespace {

const std::vector<std::pair<AblationMode, const char*>>& ablation_table() {
  static const std::vector<std::pair<AblationMode, const char*>> t{
      {AblationMode::full, "full"},
      {AblationMode::drop_camera, "drop_camera"},
      {AblationMode::drop_lidar, "drop_lidar"},
      {AblationMode::drop_radar, "drop_radar"},
      {AblationMode::drop_gps, "drop_gps"},
      {AblationMode::mean_pool, "mean_pool"},
      {AblationMode::single_frame, "single_frame"},
      {AblationMode::gps_spatial_only, "gps_spatial_only"},
      {AblationMode::gps_mlp_only, "gps_mlp_only"},
  };
  return t;
}

}  // namespace

AblationMode parse_ablation(const std::string& name) {
  for (const auto& [mode, n] : ablation_table())
    if (name == n) return mode;
  throw ContractError("unknown ablation mode '" + name + "'");
}

std::string ablation_name(AblationMode mode) {
  for (const auto& [m, n] : ablation_table())
    if (m == mode) return n;
  throw ContractError("unknown ablation mode");
}

const std::vector<AblationMode>& all_ablations() {
  static const std::vector<AblationMode> modes = [] {
    std::vector<AblationMode> v;
    for (const auto& [m, n] : ablation_table()) v.push_back(m);
    return v;
  }();
  return modes;
}

ForwardOptions ablation_options(AblationMode mode) {
  ForwardOptions o;
  switch (mode) {
    case AblationMode::full: break;
    case AblationMode::drop_camera: o.use_camera = false; break;
    case AblationMode::drop_lidar: o.use_lidar = false; break;
    case AblationMode::drop_radar: o.use_radar = false; break;
    case AblationMode::drop_gps:
      o.use_gps_spatial = false;
      o.use_gps_mlp = false;
      break;
    case AblationMode::mean_pool: o.temporal = TemporalMode::mean_pool; break;
    case AblationMode::single_frame: o.temporal = TemporalMode::single_frame; break;
    case AblationMode::gps_spatial_only: o.use_gps_mlp = false; break;
    case AblationMode::gps_mlp_only: o.use_gps_spatial = false; break;
  }
  return o;
}

DbaReport ablation_run(ModelParams<float>& params, const SampleLoader& load,
                       const std::vector<std::size_t>& indices, AblationMode mode,
                       const DbaConfig& cfg, std::size_t batch_size) {
  const auto inf = run_inference(params, load, indices, ablation_options(mode), batch_size);
  return build_report(inf.rankings(std::max<std::size_t>(cfg.k, 3)), inf.labels, inf.scenarios,
                      params.config.beams, cfg, ablation_name(mode));
}

// ---------------------------------------------------------------------------
// Files

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void scope_row(std::ostringstream& ss, const std::string& mode, const std::string& scope,
               const ScopeMetrics& m) {
  ss << mode << ',' << scope << ',' << m.samples << ',' << m.dba;
  for (double y : m.y) ss << ',' << y;
  for (double t : m.topk) ss << ',' << t;
  ss << '\n';
}

}  // namespace

void write_report_csv(const fs::path& path, const DbaReport& r) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "mode,scope,samples,dba";
  for (std::size_t k = 1; k <= r.overall.y.size(); ++k) ss << ",y" << k;
  ss << ",top1,top2,top3\n";
  scope_row(ss, r.mode, "overall", r.overall);
  for (const auto& [scen, m] : r.per_scenario) scope_row(ss, r.mode, "scenario_" + std::to_string(scen), m);
  write_text(path, ss.str());
}

void write_confusion_csv(const fs::path& path, const ConfusionMatrix& c) {
  std::ostringstream ss;
  ss << "true\\pred";
  for (std::size_t j = 0; j < c.beams; ++j) ss << ',' << j;
  ss << '\n';
  for (std::size_t i = 0; i < c.beams; ++i) {
    ss << i;
    for (std::size_t j = 0; j < c.beams; ++j) ss << ',' << c.at(i, j);
    ss << '\n';
  }
  write_text(path, ss.str());
}

std::vector<PredictionRecord> read_predictions_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("seq_id,rank1,rank2,rank3,label", 0) != 0) {
    throw FormatError(path.string() + ": expected header seq_id,rank1,rank2,rank3,label");
  }
  std::vector<PredictionRecord> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
    PredictionRecord r;
    r.seq_id = f[0];
    try {
      for (int j = 1; j <= 3; ++j) r.ranks.push_back(std::stoul(f[j]));
      r.label = std::stoul(f[4]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-integer field");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_predictions_csv(const fs::path& path, const std::vector<PredictionRecord>& rows) {
  std::ostringstream ss;
  ss << "seq_id,rank1,rank2,rank3,label\n";
  for (const auto& r : rows) {
    if (r.ranks.size() < 3) throw ContractError("prediction record needs three ranks");
    ss << r.seq_id << ',' << r.ranks[0] << ',' << r.ranks[1] << ',' << r.ranks[2] << ',' << r.label << '\n';
  }
  write_text(path, ss.str());
}

namespace {

struct Canvas {
  std::size_t w, h;
  std::vector<std::uint8_t> rgb;
  Canvas(std::size_t w_, std::size_t h_) : w(w_), h(h_), rgb(w_ * h_ * 3, 255) {}
  void set(long x, long y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= long(w) || y >= long(h)) return;
    std::copy(c.begin(), c.end(), rgb.begin() + (std::size_t(y) * w + std::size_t(x)) * 3);
  }
  void line(long x0, long y0, long x1, long y1, std::array<std::uint8_t, 3> c) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }
  void save(const fs::path& path) const {
    std::ostringstream ss;
    ss << "P6\n" << w << ' ' << h << "\n255\n";
    std::string body(rgb.begin(), rgb.end());
    write_text(path, ss.str() + body);
  }
};

}  // namespace

void write_confusion_ppm(const fs::path& path, const ConfusionMatrix& c, std::size_t cell_px) {
  const std::size_t side = std::max<std::size_t>(1, c.beams * cell_px);
  Canvas img(side, side);
  std::size_t peak = 1;
  for (std::size_t v : c.counts) peak = std::max(peak, v);
  for (std::size_t i = 0; i < c.beams; ++i)
    for (std::size_t j = 0; j < c.beams; ++j) {
      const double t = std::log1p(double(c.at(i, j))) / std::log1p(double(peak));
      const auto shade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
      for (std::size_t y = 0; y < cell_px; ++y)
        for (std::size_t x = 0; x < cell_px; ++x)
          img.set(long(j * cell_px + x), long(i * cell_px + y), {shade, shade, 255});
    }
  img.save(path);
}

void write_line_plot_ppm(const fs::path& path, const std::vector<std::vector<double>>& series,
                         std::size_t width, std::size_t height) {
  Canvas img(width, height);
  const long margin = 20;
  const long x0 = margin, y0 = long(height) - margin, x1 = long(width) - margin, y1 = margin;
  img.line(x0, y0, x1, y0, {0, 0, 0});
  img.line(x0, y0, x0, y1, {0, 0, 0});
  double lo = 0.0, hi = 0.0;
  std::size_t longest = 0;
  bool any = false;
  for (const auto& s : series)
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  for (const auto& s : series) longest = std::max(longest, s.size());
  if (!any || longest < 2) {
    img.save(path);
    return;
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  static const std::array<std::array<std::uint8_t, 3>, 4> palette{
      {{200, 30, 30}, {30, 90, 200}, {30, 150, 60}, {160, 90, 10}}};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    auto px = [&](std::size_t i) { return x0 + long(double(i) / double(longest - 1) * double(x1 - x0)); };
    auto py = [&](double v) { return y0 - long((v - lo) / (hi - lo) * double(y0 - y1)); };
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!std::isfinite(s[i - 1]) || !std::isfinite(s[i])) continue;
      img.line(px(i - 1), py(s[i - 1]), px(i), py(s[i]), palette[k % palette.size()]);
    }
  }
  img.save(path);
}

}  // namespace bevbeam
