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

#include "bevbeam/config.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <variant>

namespace bevbeam {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed keys share the size_t slot");
using Slot = std::variant<std::size_t*, double*, bool*, std::string*>;

struct KeyDef {
  const char* key;
  const char* help;
  std::function<Slot(RunConfig&)> slot;
};

#define BEVBEAM_KEY(name, member, help) \
  KeyDef { name, help, [](RunConfig& c) -> Slot { return &c.member; } }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> t{
      BEVBEAM_KEY("grid_cells", model.grid_cells, "BEV grid cells per side"),
      BEVBEAM_KEY("grid_extent", model.grid_extent, "BEV half-width in metres"),
      BEVBEAM_KEY("c_bev", model.c_bev, "BEV feature channels"),
      BEVBEAM_KEY("c_back", model.c_back, "camera backbone output channels"),
      BEVBEAM_KEY("camera_size", model.camera_size, "square camera input size, multiple of 32"),
      BEVBEAM_KEY("cam_layers", model.cam_layers, "camera-to-BEV cross-attention layers"),
      BEVBEAM_KEY("cam_heads", model.cam_heads, "camera-to-BEV attention heads"),
      BEVBEAM_KEY("temporal_layers", model.temporal_layers, "temporal transformer layers"),
      BEVBEAM_KEY("temporal_heads", model.temporal_heads, "temporal transformer heads"),
      BEVBEAM_KEY("ffn_mult", model.ffn_mult, "transformer feed-forward width multiplier"),
      BEVBEAM_KEY("gps_hidden", model.gps_hidden, "GPS MLP hidden width"),
      BEVBEAM_KEY("head_hidden", model.head_hidden, "classifier hidden width"),
      BEVBEAM_KEY("head_dropout", model.head_dropout, "classifier dropout rate"),
      BEVBEAM_KEY("beams", model.beams, "codebook size M"),
      BEVBEAM_KEY("timesteps", model.timesteps, "observation steps per sample"),
      BEVBEAM_KEY("lidar_channels", model.lidar_channels, "LiDAR BEV channels (1 or 3)"),
      BEVBEAM_KEY("lr", optim.lr, "peak learning rate"),
      BEVBEAM_KEY("weight_decay", optim.weight_decay, "decoupled weight decay"),
      BEVBEAM_KEY("beta1", optim.beta1, "Adam first-moment decay"),
      BEVBEAM_KEY("beta2", optim.beta2, "Adam second-moment decay"),
      BEVBEAM_KEY("eps", optim.eps, "Adam epsilon"),
      BEVBEAM_KEY("epochs", optim.epochs, "training epochs (cosine schedule length)"),
      BEVBEAM_KEY("batch_size", optim.batch_size, "training batch size"),
      BEVBEAM_KEY("clip_norm", optim.clip_norm, "global gradient-norm cap, 0 disables"),
      BEVBEAM_KEY("gamma", gamma, "focal loss focusing exponent"),
      BEVBEAM_KEY("class_weights", class_weights, "frequency-based focal loss class weights"),
      BEVBEAM_KEY("flip_prob", flip_prob, "horizontal flip probability"),
      BEVBEAM_KEY("photometric", photometric, "brightness/contrast/saturation jitter"),
      BEVBEAM_KEY("dba_k", dba_k, "top predictions scored by DBA"),
      BEVBEAM_KEY("dba_delta", dba_delta, "DBA distance normalization"),
      BEVBEAM_KEY("eval_batch", eval_batch, "inference batch size"),
      BEVBEAM_KEY("seed", seed, "seed for generation, initialization and shuffling"),
      BEVBEAM_KEY("split_seed", split_seed, "seed for the train/val/test split"),
      BEVBEAM_KEY("train_ratio", train_ratio, "training split fraction"),
      BEVBEAM_KEY("val_ratio", val_ratio, "validation split fraction"),
      BEVBEAM_KEY("test_ratio", test_ratio, "test split fraction"),
      BEVBEAM_KEY("ablation", ablation, "pathway disabled in training and evaluation"),
      BEVBEAM_KEY("sequences", sequences, "synthetic sequences to generate"),
      BEVBEAM_KEY("scenarios", scenarios, "synthetic scenarios"),
      BEVBEAM_KEY("gps_sigma", gps_sigma, "synthetic GPS noise, metres"),
      BEVBEAM_KEY("image_size", image_size, "synthetic camera resolution"),
      BEVBEAM_KEY("fov_deg", fov_deg, "codebook azimuth field of view, degrees"),
      BEVBEAM_KEY("data", data, "dataset directory"),
      BEVBEAM_KEY("out", out, "output directory"),
      BEVBEAM_KEY("checkpoint", checkpoint, "checkpoint directory"),
  };
  return t;
}

#undef BEVBEAM_KEY

const KeyDef& find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (key == k.key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_slot(const Slot& slot) {
  return std::visit(
      [](auto* p) -> std::string {
        using V = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<V, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<V, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<V, double>) {
          std::ostringstream ss;
          ss.precision(17);
          ss << *p;
          return ss.str();
        } else {
          return std::to_string(*p);
        }
      },
      slot);
}

void parse_slot(const Slot& slot, const std::string& key, const std::string& value) {
  auto bad = [&] { return ConfigError("bad value '" + value + "' for config key '" + key + "'"); };
  std::visit(
      [&](auto* p) {
        using V = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<V, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<V, bool>) {
          if (value == "true" || value == "1" || value == "yes") *p = true;
          else if (value == "false" || value == "0" || value == "no") *p = false;
          else throw bad();
        } else {
          std::size_t used = 0;
          try {
            if constexpr (std::is_same_v<V, double>) {
              *p = std::stod(value, &used);
            } else {
              if (value.empty() || value[0] == '-') throw bad();
              *p = static_cast<V>(std::stoull(value, &used));
            }
          } catch (const ConfigError&) {
            throw;
          } catch (const std::exception&) {
            throw bad();
          }
          if (used != value.size()) throw bad();
        }
      },
      slot);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  parse_slot(find_key(key).slot(*this), key, trim(value));
  explicit_keys.insert(key);
}

std::string RunConfig::get(const std::string& key) const {
  return format_slot(find_key(key).slot(const_cast<RunConfig&>(*this)));
}

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  try {
    model.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  try {
    optim.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("optimizer config: ") + e.what());
  }
  if (!(gamma >= 0.0)) fail("gamma", "must be >= 0");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) fail("flip_prob", "must lie in [0, 1]");
  if (dba_k < 1) fail("dba_k", "must be >= 1");
  if (!(dba_delta >= 1.0)) fail("dba_delta", "must be >= 1");
  if (eval_batch < 1) fail("eval_batch", "must be >= 1");
  for (const auto& [k, v] : {std::pair{"train_ratio", train_ratio}, {"val_ratio", val_ratio}, {"test_ratio", test_ratio}})
    if (!(v >= 0.0)) fail(k, "must be >= 0");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) fail("train_ratio", "split ratios must sum to 1");
  try {
    parse_ablation(ablation);
  } catch (const ContractError& e) {
    fail("ablation", e.what());
  }
  if (sequences < 1) fail("sequences", "must be >= 1");
  if (scenarios < 1) fail("scenarios", "must be >= 1");
  if (!(gps_sigma >= 0.0)) fail("gps_sigma", "must be >= 0");
  if (image_size < 32) fail("image_size", "must be >= 32");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) fail("fov_deg", "must lie in (0, 180)");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.key) + " = " + get(k.key) + "\n";
  return out;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.model = model;
  tc.optim = optim;
  tc.gamma = gamma;
  tc.use_class_weights = class_weights;
  tc.seed = seed;
  tc.flip_prob = flip_prob;
  tc.photometric = photometric;
  tc.dba = dba();
  tc.forward = ablation_options(parse_ablation(ablation));
  tc.eval_batch = eval_batch;
  return tc;
}

SyntheticScenarioConfig RunConfig::synthetic_config() const {
  SyntheticScenarioConfig sc;
  sc.n_sequences = sequences;
  sc.seed = seed;
  sc.codebook = {model.beams, fov_deg};
  sc.scenarios = scenarios;
  sc.gps_sigma = gps_sigma;
  sc.image_size = image_size;
  sc.extent = std::min(sc.extent, model.grid_extent);
  return sc;
}

std::vector<ConfigKeyInfo> config_keys() {
  RunConfig defaults;
  std::vector<ConfigKeyInfo> out;
  for (const auto& k : key_table()) out.push_back({k.key, defaults.get(k.key), k.help});
  return out;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  c.merge_text(read_file(path), path);
  return c;
}

int apply_thread_limit() {
  const char* env = std::getenv("BEVBEAM_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("BEVBEAM_THREADS must be a positive integer, got '") + env + "'");
  Eigen::setNbThreads(static_cast<int>(n));
  return static_cast<int>(n);
}

}  // namespace bevbeam
