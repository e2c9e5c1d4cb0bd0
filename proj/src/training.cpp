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

#include "bevbeam/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

#include "bevbeam/pipeline.hpp"

namespace bevbeam {

namespace fs = std::filesystem;

void FocalLossConfig::validate(std::size_t beams) const {
  if (!(gamma >= 0.0)) throw ContractError("focal loss: gamma must be >= 0");
  if (!alpha.empty() && alpha.size() != beams) {
    throw ContractError("focal loss: " + std::to_string(alpha.size()) + " class weights for " +
                        std::to_string(beams) + " beams");
  }
  for (double a : alpha)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ContractError("focal loss: class weights must be finite and >= 0");
}

template <class T>
Tensor<T> focal_loss(Tape<T>& tape, const Tensor<T>& probs, const std::vector<std::size_t>& labels,
                     const FocalLossConfig& cfg) {
  if (probs.ndim() != 2) throw DimensionError("focal loss: expected [B, M] probabilities, got " + shape_str(probs.shape()));
  const std::size_t B = probs.shape()[0], M = probs.shape()[1];
  if (labels.size() != B || B == 0) {
    throw ContractError("focal loss: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(B));
  }
  cfg.validate(M);
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= M) {
      throw ContractError("focal loss: label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(M) + ")");
    }
  }
  static constexpr double kFloor = 1e-12;
  const double g = cfg.gamma;
  auto weight = [&](std::size_t m) { return cfg.alpha.empty() ? 1.0 : cfg.alpha[m]; };
  double total = 0.0;
  const T* p = probs.data();
  for (std::size_t b = 0; b < B; ++b) {
    const double pt = double(p[b * M + labels[b]]);
    const double q = std::max(0.0, 1.0 - pt);
    total += -weight(labels[b]) * std::pow(q, g) * std::log(std::max(pt, kFloor));
  }
  Tensor<T> y(Array<T>::scalar(T(total / double(B))), tape.needs_grad(probs));
  if (y.requires_grad()) {
    tape.record([pn = probs.shared(), yn = y.shared(), labels, g, B, M, alpha = cfg.alpha] {
      if (yn->grad.data.empty()) return;
      const double up = double(yn->grad[0]);
      T* gx = pn->grad_buffer();
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t m = labels[b];
        const double pt = double(pn->value[b * M + m]);
        const double q = std::max(0.0, 1.0 - pt);
        const double a = alpha.empty() ? 1.0 : alpha[m];
        double d = 0.0;
        if (g != 0.0 && q > 0.0) d += g * std::pow(q, g - 1.0) * std::log(std::max(pt, kFloor));
        if (pt > kFloor) d -= std::pow(q, g) / pt;
        gx[b * M + m] += T(up * a * d / double(B));
      }
    });
  }
  return y;
}

template Tensor<float> focal_loss(Tape<float>&, const Tensor<float>&, const std::vector<std::size_t>&,
                                  const FocalLossConfig&);
template Tensor<double> focal_loss(Tape<double>&, const Tensor<double>&,
                                   const std::vector<std::size_t>&, const FocalLossConfig&);

std::vector<double> class_weights(const std::vector<std::size_t>& labels, std::size_t beams) {
  if (labels.empty()) throw ContractError("class weights: empty label set");
  if (beams == 0) throw ContractError("class weights: no beams");
  std::vector<double> count(beams, 0.0);
  for (std::size_t l : labels) {
    if (l >= beams) throw ContractError("class weights: label " + std::to_string(l) + " outside codebook");
    count[l] += 1.0;
  }
  std::vector<double> w(beams);
  double sum = 0.0;
  for (std::size_t m = 0; m < beams; ++m) {
    w[m] = double(labels.size()) / (double(beams) * (count[m] + 1.0));
    sum += w[m];
  }
  for (double& v : w) v *= double(beams) / sum;
  return w;
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ContractError("optimizer: lr must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw ContractError("optimizer: weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ContractError("optimizer: eps must be > 0");
  if (epochs == 0) throw ContractError("optimizer: epochs must be >= 1");
  if (batch_size == 0) throw ContractError("optimizer: batch size must be >= 1");
}

template <class T>
void adamw_step(const std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state,
                const OptimizerConfig& cfg, double lr_t) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (T g : t.grad().data)
      if (!std::isfinite(double(g))) throw NumericError("non-finite gradient in " + name);
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.shape());
      state.v.emplace_back(t.shape());
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adamw: optimizer state does not match the parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const double decay = 1.0 - lr_t * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].second;
    Array<T>& m = state.m[i];
    Array<T>& v = state.v[i];
    if (m.shape != p.shape()) throw ContractError("adamw: moment shape mismatch for " + params[i].first);
    T* w = p.mutable_data();
    const T* g = p.has_grad() ? p.grad().ptr() : nullptr;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g ? double(g[j]) : 0.0;
      double wj = double(w[j]) * decay;
      const double mj = cfg.beta1 * double(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * double(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = T(mj);
      v[j] = T(vj);
      wj -= lr_t * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
      w[j] = T(wj);
    }
  }
}

template void adamw_step(const std::vector<std::pair<std::string, Tensor<float>>>&, AdamState<float>&,
                         const OptimizerConfig&, double);
template void adamw_step(const std::vector<std::pair<std::string, Tensor<double>>>&,
                         AdamState<double>&, const OptimizerConfig&, double);

template <class T>
double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<T>>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (T g : t.grad().data) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const T s = T(max_norm / norm);
    for (const auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      auto& g = const_cast<Array<T>&>(t.grad());
      for (T& x : g.data) x *= s;
    }
  }
  return norm;
}

template double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<float>>>&, double);
template double clip_grad_norm(const std::vector<std::pair<std::string, Tensor<double>>>&, double);

double cosine_lr(std::size_t epoch, const OptimizerConfig& cfg) {
  if (epoch > cfg.epochs) {
    throw ContractError("cosine_lr: epoch " + std::to_string(epoch) + " past schedule end " + std::to_string(cfg.epochs));
  }
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(cfg.epochs)));
}

// ---------------------------------------------------------------------------
// Config text

namespace {

struct ConfigField {
  const char* key;
  std::size_t ModelConfig::*count = nullptr;
  double ModelConfig::*real = nullptr;
};

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> f{
      {"grid_cells", &ModelConfig::grid_cells},
      {"grid_extent", nullptr, &ModelConfig::grid_extent},
      {"c_bev", &ModelConfig::c_bev},
      {"c_back", &ModelConfig::c_back},
      {"camera_size", &ModelConfig::camera_size},
      {"cam_layers", &ModelConfig::cam_layers},
      {"cam_heads", &ModelConfig::cam_heads},
      {"temporal_layers", &ModelConfig::temporal_layers},
      {"temporal_heads", &ModelConfig::temporal_heads},
      {"ffn_mult", &ModelConfig::ffn_mult},
      {"gps_hidden", &ModelConfig::gps_hidden},
      {"head_hidden", &ModelConfig::head_hidden},
      {"head_dropout", nullptr, &ModelConfig::head_dropout},
      {"beams", &ModelConfig::beams},
      {"timesteps", &ModelConfig::timesteps},
      {"lidar_channels", &ModelConfig::lidar_channels},
  };
  return f;
}

std::string field_value(const ModelConfig& c, const ConfigField& f) {
  if (f.count) return std::to_string(c.*f.count);
  std::ostringstream ss;
  ss.precision(17);
  ss << c.*f.real;
  return ss.str();
}

std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string model_config_text(const ModelConfig& cfg) {
  std::string out;
  for (const auto& f : config_fields()) out += std::string(f.key) + "=" + field_value(cfg, f) + "\n";
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c;
  for (const auto& [key, value] : parse_kv(text, "model config")) {
    auto it = std::find_if(config_fields().begin(), config_fields().end(),
                           [&](const ConfigField& f) { return key == f.key; });
    if (it == config_fields().end()) throw ConfigError("unknown model config key '" + key + "'");
    try {
      std::size_t used = 0;
      if (it->count) {
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
        c.*(it->count) = std::stoull(value, &used);
      } else {
        c.*(it->real) = std::stod(value, &used);
      }
      if (used != value.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad value '" + value + "' for model config key '" + key + "'");
    }
  }
  return c;
}

std::uint64_t model_config_hash(const ModelConfig& cfg) { return fnv1a(model_config_text(cfg)); }

void require_same_config(const ModelConfig& expected, const ModelConfig& actual) {
  for (const auto& f : config_fields()) {
    const std::string a = field_value(expected, f), b = field_value(actual, f);
    if (a != b) {
      throw MismatchError(f.key, std::string("checkpoint config mismatch: ") + f.key + " is " + b +
                                     " in the checkpoint but " + a + " was requested");
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const fs::path& dir, ModelParams<float>& params, const TrainState& state) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "params");
  fs::create_directories(tmp / "buffers");
  const std::string cfg_text = model_config_text(params.config);
  write_file(tmp / "config.txt", cfg_text);
  std::ostringstream st;
  st.precision(17);
  st << "config_hash=" << fnv1a(cfg_text) << "\nstep=" << state.adam.step << "\nseed=" << state.seed
     << "\nepoch=" << state.epoch << "\nbest_val_dba=" << state.best_val_dba << "\n";
  write_file(tmp / "state.txt", st.str());
  const auto named = params.named_parameters();
  for (const auto& [name, t] : named) save_tensor(tmp / "params" / (name + ".bvt"), t.value());
  for (const auto& [name, a] : params.named_buffers()) save_tensor(tmp / "buffers" / (name + ".bvt"), *a);
  if (!state.adam.m.empty()) {
    fs::create_directories(tmp / "optimizer" / "m");
    fs::create_directories(tmp / "optimizer" / "v");
    for (std::size_t i = 0; i < named.size(); ++i) {
      save_tensor(tmp / "optimizer" / "m" / (named[i].first + ".bvt"), state.adam.m.at(i));
      save_tensor(tmp / "optimizer" / "v" / (named[i].first + ".bvt"), state.adam.v.at(i));
    }
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

ModelConfig read_checkpoint_config(const fs::path& dir) {
  const std::string text = read_file(dir / "config.txt");
  const auto state = parse_kv(read_file(dir / "state.txt"), (dir / "state.txt").string());
  auto it = state.find("config_hash");
  if (it == state.end() || it->second != std::to_string(fnv1a(text))) {
    throw FormatError((dir / "config.txt").string() + ": config hash does not match state.txt");
  }
  return parse_model_config(text);
}

namespace {

Array<float> load_named(const fs::path& path, const std::string& name, const Shape& shape) {
  if (!fs::exists(path)) throw MismatchError(name, "checkpoint has no tensor '" + name + "'");
  Array<float> a = load_tensor<float>(path);
  if (a.shape != shape) {
    throw MismatchError(name, "checkpoint tensor '" + name + "' has shape " + shape_str(a.shape) +
                                  ", model expects " + shape_str(shape));
  }
  return a;
}

}  // namespace

TrainState load_checkpoint(const fs::path& dir, ModelParams<float>& params) {
  require_same_config(params.config, read_checkpoint_config(dir));
  const auto kv = parse_kv(read_file(dir / "state.txt"), (dir / "state.txt").string());
  TrainState st;
  try {
    st.adam.step = std::stoull(kv.at("step"));
    st.seed = std::stoull(kv.at("seed"));
    st.epoch = std::stoull(kv.at("epoch"));
    st.best_val_dba = std::stod(kv.at("best_val_dba"));
  } catch (const std::exception&) {
    throw FormatError((dir / "state.txt").string() + ": missing or malformed field");
  }
  const auto named = params.named_parameters();
  for (const auto& [name, t] : named) {
    Tensor<float> p = t;
    p.mutable_value() = load_named(dir / "params" / (name + ".bvt"), name, t.shape());
  }
  for (const auto& [name, a] : params.named_buffers()) {
    *a = load_named(dir / "buffers" / (name + ".bvt"), name, a->shape);
  }
  if (fs::exists(dir / "optimizer")) {
    for (const auto& [name, t] : named) {
      st.adam.m.push_back(load_named(dir / "optimizer" / "m" / (name + ".bvt"), name, t.shape()));
      st.adam.v.push_back(load_named(dir / "optimizer" / "v" / (name + ".bvt"), name, t.shape()));
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig cfg, SequenceLoader load, std::vector<std::size_t> train_indices,
                 std::vector<std::size_t> train_labels, std::vector<std::size_t> val_indices)
    : cfg_(std::move(cfg)), load_(std::move(load)), train_(std::move(train_indices)), val_(std::move(val_indices)) {
  cfg_.model.validate();
  cfg_.optim.validate();
  cfg_.dba.validate();
  if (train_.empty()) throw ContractError("trainer: empty training split");
  if (!(cfg_.flip_prob >= 0.0 && cfg_.flip_prob <= 1.0)) throw ContractError("trainer: flip probability outside [0, 1]");
  if (cfg_.eval_batch == 0) throw ContractError("trainer: eval batch must be >= 1");
  loss_.gamma = cfg_.gamma;
  if (cfg_.use_class_weights) loss_.alpha = class_weights(train_labels, cfg_.model.beams);
  loss_.validate(cfg_.model.beams);
  params_ = ModelParams<float>(cfg_.model, cfg_.seed);
  named_ = params_.named_parameters();
  state_.seed = cfg_.seed;
}

PreparedSample Trainer::training_sample(std::size_t index, std::mt19937_64& rng) const {
  SampleSequence seq = load_(index);
  if (cfg_.photometric) {
    std::uniform_real_distribution<double> jitter(0.8, 1.2);
    PhotometricFactors f;
    f.brightness = jitter(rng);
    f.contrast = jitter(rng);
    f.saturation = jitter(rng);
    for (auto& frame : seq.camera) frame = apply_photometric(frame, f);
  }
  PreparedSample s = prepare_sample(seq, cfg_.model);
  std::bernoulli_distribution flip(cfg_.flip_prob);
  if (flip(rng)) s = flip_augment(s);
  return s;
}

double Trainer::evaluate(const std::vector<std::size_t>& indices) {
  if (indices.empty()) return std::nan("");
  SampleLoader loader = [&](std::size_t i) { return prepare_sample(load_(i), cfg_.model); };
  const auto inf = run_inference(params_, loader, indices, cfg_.forward, cfg_.eval_batch);
  return dba_score(inf.rankings(cfg_.dba.k), inf.labels, cfg_.dba);
}

EpochMetrics Trainer::run_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t e = state_.epoch;
  if (e >= cfg_.optim.epochs) throw ContractError("trainer: all scheduled epochs already ran");
  EpochMetrics em;
  em.epoch = e + 1;
  em.lr = cosine_lr(e, cfg_.optim);

  std::vector<std::size_t> order = train_;
  std::mt19937_64 shuffle_rng(mix_seed(cfg_.seed, 2 * e));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::mt19937_64 dropout_rng(mix_seed(cfg_.seed, 2 * e + 1));

  double loss_sum = 0.0;
  std::vector<Ranking> rankings;
  std::vector<std::size_t> seen;
  const std::size_t bs = cfg_.optim.batch_size;
  for (std::size_t start = 0, batch_no = 0; start < order.size(); start += bs, ++batch_no) {
    const std::size_t end = std::min(order.size(), start + bs);
    std::vector<PreparedSample> samples;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < end; ++i) {
      std::mt19937_64 aug(mix_seed(mix_seed(cfg_.seed, e), i));
      samples.push_back(training_sample(order[i], aug));
      labels.push_back(samples.back().label);
    }
    ForwardOptions opts = cfg_.forward;
    opts.mode = Mode::train;
    opts.rng = &dropout_rng;
    opts.probe = nullptr;
    params_.zero_grad();
    try {
      Tape<float> tape(true);
      const auto out = forward_full(tape, params_, collate(samples), opts);
      const auto loss = focal_loss(tape, out.probs, labels, loss_);
      const double lv = double(loss.value()[0]);
      if (!std::isfinite(lv)) throw NumericError("non-finite loss");
      tape.backward(loss);
      if (cfg_.optim.clip_norm > 0.0) clip_grad_norm(named_, cfg_.optim.clip_norm);
      adamw_step(named_, state_.adam, cfg_.optim, em.lr);
      loss_sum += lv * double(labels.size());
      const std::size_t m = cfg_.model.beams;
      for (std::size_t b = 0; b < labels.size(); ++b) {
        rankings.push_back(rank_beams(out.probs.data() + b * m, m, cfg_.dba.k));
        seen.push_back(labels[b]);
      }
    } catch (const NumericError& err) {
      throw NumericError("epoch " + std::to_string(em.epoch) + ", batch " + std::to_string(batch_no) + ": " + err.what());
    }
  }
  params_.zero_grad();
  em.train_loss = loss_sum / double(order.size());
  em.train_dba = dba_score(rankings, seen, cfg_.dba);
  em.val_dba = evaluate(val_);
  state_.epoch = e + 1;

  const bool improved = std::isnan(em.val_dba) || em.val_dba > state_.best_val_dba;
  if (improved && !std::isnan(em.val_dba)) state_.best_val_dba = em.val_dba;
  if (improved && !cfg_.checkpoint_dir.empty()) save_checkpoint(cfg_.checkpoint_dir, params_, state_);

  elapsed_s_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  em.wall_time_s = elapsed_s_;
  if (!cfg_.log_path.empty()) {
    if (cfg_.log_path.has_parent_path()) fs::create_directories(cfg_.log_path.parent_path());
    const bool fresh = e == 0;
    std::ofstream log(cfg_.log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + cfg_.log_path.string());
    log.precision(10);
    if (fresh) log << "epoch,lr,train_loss,val_dba,wall_time_s\n";
    log << em.epoch << ',' << em.lr << ',' << em.train_loss << ',' << em.val_dba << ',' << em.wall_time_s << '\n';
  }
  return em;
}

std::vector<EpochMetrics> Trainer::fit(const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> history;
  while (state_.epoch < cfg_.optim.epochs) {
    history.push_back(run_epoch());
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

// ---------------------------------------------------------------------------
// GPS-only baseline

GpsBaseline::GpsBaseline(std::size_t hidden, std::size_t beams, double extent_, std::uint64_t seed)
    : extent(extent_) {
  std::mt19937_64 rng(seed);
  fc1 = LinearLayer<float>(4, hidden, true, rng);
  fc2 = LinearLayer<float>(hidden, hidden, true, rng);
  fc3 = LinearLayer<float>(hidden, beams, true, rng);
}

Tensor<float> GpsBaseline::forward(Tape<float>& tape, const Array<float>& gps) const {
  if (gps.ndim() != 2 || gps.shape[1] != 4) throw DimensionError("gps baseline: expected [B, 4], got " + shape_str(gps.shape));
  Array<float> x = gps;
  for (float& v : x.data) v = float(double(v) / extent);
  auto h = relu(tape, fc1(tape, constant(std::move(x))));
  h = relu(tape, fc2(tape, h));
  return softmax(tape, fc3(tape, h));
}

NamedParams GpsBaseline::named_parameters() {
  return {{"fc1.weight", fc1.weight}, {"fc1.bias", fc1.bias}, {"fc2.weight", fc2.weight},
          {"fc2.bias", fc2.bias},     {"fc3.weight", fc3.weight}, {"fc3.bias", fc3.bias}};
}

GpsBaseline train_gps_baseline(const Array<float>& gps, const std::vector<std::size_t>& labels,
                               std::size_t beams, double extent, const GpsBaselineConfig& cfg) {
  if (gps.ndim() != 2 || gps.shape[1] != 4 || gps.shape[0] != labels.size() || labels.empty()) {
    throw ContractError("gps baseline: need [N, 4] readings with N labels");
  }
  GpsBaseline model(cfg.hidden, beams, extent, cfg.seed);
  NamedParams named = model.named_parameters();
  FocalLossConfig loss{cfg.gamma, class_weights(labels, beams)};
  OptimizerConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = 0.0;
  oc.epochs = cfg.epochs;
  oc.batch_size = cfg.batch_size;
  AdamState<float> adam;
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::mt19937_64 rng(mix_seed(cfg.seed, e));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cosine_lr(e, oc);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Array<float> x(Shape{end - start, 4});
      std::vector<std::size_t> y;
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(gps.ptr() + order[i] * 4, 4, x.ptr() + (i - start) * 4);
        y.push_back(labels[order[i]]);
      }
      for (auto& [n, t] : named) t.zero_grad();
      Tape<float> tape(true);
      auto l = focal_loss(tape, model.forward(tape, x), y, loss);
      tape.backward(l);
      adamw_step(named, adam, oc, lr);
    }
  }
  for (auto& [n, t] : named) t.zero_grad();
  return model;
}

Array<float> gps_baseline_probs(const GpsBaseline& model, const Array<float>& gps) {
  Tape<float> tape(false);
  return model.forward(tape, gps).value();
}

}  // namespace bevbeam
