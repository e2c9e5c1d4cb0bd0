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

// Command-line entry point: generate, train, eval and predict.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "bevbeam/config.hpp"
#include "bevbeam/data.hpp"
#include "bevbeam/metrics.hpp"
#include "bevbeam/pipeline.hpp"
#include "bevbeam/training.hpp"

namespace fs = std::filesystem;
using namespace bevbeam;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumeric = 4, kMismatch = 5 };

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> keys;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "run config file (key = value lines)");
  sub->add_option("--set", args.sets, "override, key=value (repeatable)");
  for (const auto& k : config_keys()) {
    sub->add_option("--" + k.key, args.keys[k.key], k.help + " [default: " + k.default_value + "]");
  }
}

RunConfig resolve(CLI::App* sub, const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_run_config(args.config_path);
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& k : config_keys()) {
    if (sub->count("--" + k.key)) cfg.set(k.key, args.keys.at(k.key));
  }
  return cfg;
}

fs::path require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("missing required key '") + key + "'");
  return value;
}

void write_effective_config(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_file(dir / "run_config.txt", cfg.to_text());
}

std::vector<std::string> model_keys() {
  std::vector<std::string> keys;
  std::istringstream in(model_config_text(ModelConfig{}));
  for (std::string line; std::getline(in, line);) keys.push_back(line.substr(0, line.find('=')));
  return keys;
}

/// Model config from the checkpoint; explicitly requested model keys must agree.
ModelConfig checkpoint_model(const fs::path& ckpt, const RunConfig& cfg) {
  const ModelConfig stored = read_checkpoint_config(ckpt);
  RunConfig requested;
  requested.model = stored;
  for (const auto& k : model_keys())
    if (cfg.explicit_keys.count(k)) requested.set(k, cfg.get(k));
  require_same_config(requested.model, stored);
  return stored;
}

/// Adopts the dataset's codebook size unless `beams` was given explicitly.
void match_codebook(RunConfig& cfg, const Dataset& ds) {
  if (ds.size() == 0) throw ContractError("dataset is empty");
  const std::size_t beams = ds.load(0).beams;
  if (!cfg.explicit_keys.count("beams")) {
    cfg.model.beams = beams;
  } else if (cfg.model.beams != beams) {
    throw ConfigError("config beams=" + std::to_string(cfg.model.beams) + " but the dataset codebook has " +
                      std::to_string(beams) + " beams");
  }
}

std::vector<std::size_t> split_indices(const Dataset& ds, const RunConfig& cfg, const std::string& which) {
  if (which == "all") {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const auto split = split_dataset(ds, {cfg.train_ratio, cfg.val_ratio, cfg.test_ratio}, cfg.split_seed);
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  if (which == "test") return split.test;
  throw ConfigError("--split must be train, val, test or all, got '" + which + "'");
}

SampleSequence load_checked(const Dataset& ds, std::size_t i) {
  try {
    return ds.load(i);
  } catch (const IoError& e) {
    throw IoError("sample " + ds.entry(i).seq_id + ": " + e.what());
  } catch (const Error& e) {
    throw FormatError("sample " + ds.entry(i).seq_id + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

int cmd_generate(RunConfig cfg) {
  cfg.validate();
  const fs::path out = require_path(cfg.out, "out");
  const auto sc = cfg.synthetic_config();
  const Dataset ds = generate_synthetic(sc, out);
  write_effective_config(out, cfg);
  std::vector<std::size_t> hist(cfg.model.beams, 0);
  for (const auto& e : ds.entries()) ++hist.at(e.label);
  std::size_t covered = 0, lo = ds.size(), hi = 0;
  for (std::size_t h : hist) {
    covered += h > 0;
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  std::printf("generated %zu sequences in %s\n", ds.size(), out.string().c_str());
  std::printf("labels: %zu of %zu beams used, per-beam count min %zu max %zu\n", covered, hist.size(), lo, hi);
  std::printf("histogram:");
  for (std::size_t h : hist) std::printf(" %zu", h);
  std::printf("\n");
  return kOk;
}

int cmd_train(RunConfig cfg) {
  const fs::path data = require_path(cfg.data, "data");
  const fs::path out = require_path(cfg.out, "out");
  const Dataset ds = load_dataset(data);
  match_codebook(cfg, ds);
  cfg.validate();
  const auto split = split_dataset(ds, {cfg.train_ratio, cfg.val_ratio, cfg.test_ratio}, cfg.split_seed);
  std::vector<std::size_t> labels;
  for (std::size_t i : split.train) labels.push_back(ds.entry(i).label);
  write_effective_config(out, cfg);

  TrainConfig tc = cfg.train_config();
  tc.checkpoint_dir = out / "checkpoint";
  tc.log_path = out / "train_log.csv";
  Trainer trainer(tc, [&](std::size_t i) { return load_checked(ds, i); }, split.train, labels, split.val);
  std::printf("training on %zu samples (%zu validation), %zu parameters\n", split.train.size(), split.val.size(),
              trainer.params().parameter_count());
  trainer.fit([](const EpochMetrics& m) {
    std::printf("epoch %zu lr %.3g loss %.6f train_dba %.4f val_dba %.4f (%.1fs)\n", m.epoch, m.lr, m.train_loss,
                m.train_dba, m.val_dba, m.wall_time_s);
    std::fflush(stdout);
  });
  std::printf("best validation DBA: %.6f\n", trainer.state().best_val_dba);
  return kOk;
}

void write_plots(const fs::path& out, const DbaReport& r) {
  write_confusion_ppm(out / "confusion.ppm", r.confusion);
  std::vector<std::vector<double>> curves{r.overall.y};
  for (const auto& [s, m] : r.per_scenario) curves.push_back(m.y);
  write_line_plot_ppm(out / "dba_curve.ppm", curves);
}

int cmd_eval(RunConfig cfg, const std::string& which, const std::string& predictions, bool plots) {
  const fs::path out = require_path(cfg.out, "out");
  DbaReport report;
  if (!predictions.empty()) {
    cfg.validate();
    const auto rows = read_predictions_csv(predictions);
    if (rows.empty()) throw ContractError("prediction file has no rows");
    std::map<std::string, std::size_t> scenario_of;
    std::size_t beams = cfg.model.beams;
    if (!cfg.data.empty()) {
      const Dataset ds = load_dataset(cfg.data);
      for (const auto& e : ds.entries()) scenario_of[e.seq_id] = e.scenario_id;
      if (!cfg.explicit_keys.count("beams") && ds.size() > 0) beams = ds.load(0).beams;
    }
    std::vector<Ranking> ranks;
    std::vector<std::size_t> labels, scenarios;
    for (const auto& r : rows) {
      ranks.push_back(r.ranks);
      labels.push_back(r.label);
      const auto it = scenario_of.find(r.seq_id);
      scenarios.push_back(it == scenario_of.end() ? 0 : it->second);
    }
    report = build_report(ranks, labels, scenarios, beams, cfg.dba(), "predictions");
  } else {
    const fs::path ckpt = cfg.checkpoint.empty() ? out / "checkpoint" : fs::path(cfg.checkpoint);
    cfg.model = checkpoint_model(ckpt, cfg);
    cfg.validate();
    ModelParams<float> params(cfg.model, 0);
    load_checkpoint(ckpt, params);
    const Dataset ds = load_dataset(require_path(cfg.data, "data"));
    const auto indices = split_indices(ds, cfg, which);
    SampleLoader loader = [&](std::size_t i) { return prepare_sample(load_checked(ds, i), cfg.model); };
    report = ablation_run(params, loader, indices, parse_ablation(cfg.ablation), cfg.dba(), cfg.eval_batch);
  }
  write_effective_config(out, cfg);
  write_report_csv(out / "report.csv", report);
  write_confusion_csv(out / "confusion.csv", report.confusion);
  if (plots) write_plots(out, report);
  std::printf("mode %s: DBA %.6f over %zu samples (top-1 %.4f, top-2 %.4f, top-3 %.4f)\n", report.mode.c_str(),
              report.overall.dba, report.overall.samples, report.overall.topk[0], report.overall.topk[1],
              report.overall.topk[2]);
  for (const auto& [s, m] : report.per_scenario) std::printf("  scenario %zu: DBA %.6f (%zu samples)\n", s, m.dba, m.samples);
  return kOk;
}

int cmd_predict(RunConfig cfg, const std::string& which) {
  const fs::path out = require_path(cfg.out, "out");
  const fs::path ckpt = cfg.checkpoint.empty() ? out / "checkpoint" : fs::path(cfg.checkpoint);
  cfg.model = checkpoint_model(ckpt, cfg);
  cfg.validate();
  ModelParams<float> params(cfg.model, 0);
  load_checkpoint(ckpt, params);
  const Dataset ds = load_dataset(require_path(cfg.data, "data"));
  const auto indices = split_indices(ds, cfg, which);
  SampleLoader loader = [&](std::size_t i) { return prepare_sample(load_checked(ds, i), cfg.model); };
  const auto inf = run_inference(params, loader, indices, ablation_options(parse_ablation(cfg.ablation)),
                                 cfg.eval_batch);
  const auto ranks = inf.rankings(3);
  const std::size_t m = cfg.model.beams;
  std::ostringstream ss;
  ss.precision(9);
  ss << "seq_id,rank1,rank2,rank3,prob1,prob2,prob3\n";
  for (std::size_t n = 0; n < ranks.size(); ++n) {
    ss << inf.seq_ids[n];
    for (std::size_t r : ranks[n]) ss << ',' << r;
    for (std::size_t r : ranks[n]) ss << ',' << inf.probs[n * m + r];
    ss << '\n';
  }
  write_effective_config(out, cfg);
  write_file(out / "predictions.csv", ss.str());
  std::printf("wrote %zu predictions to %s\n", ranks.size(), (out / "predictions.csv").string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevbeam: multi-modal BEV beam prediction"};
  app.require_subcommand(1);
  CommonArgs gen_args, train_args, eval_args, pred_args;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, gen_args);
  auto* train = app.add_subcommand("train", "train a model and keep the best checkpoint");
  add_common(train, train_args);
  auto* eval = app.add_subcommand("eval", "write DBA/top-k reports and a confusion matrix");
  add_common(eval, eval_args);
  std::string eval_split = "test", predictions;
  bool plots = false;
  eval->add_option("--split", eval_split, "train, val, test or all [default: test]");
  eval->add_option("--predictions", predictions, "score a prediction CSV instead of a checkpoint");
  eval->add_flag("--plots", plots, "also write confusion.ppm and dba_curve.ppm");
  auto* predict = app.add_subcommand("predict", "write ranked beams per sample");
  add_common(predict, pred_args);
  std::string predict_split = "all";
  predict->add_option("--split", predict_split, "train, val, test or all [default: all]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    apply_thread_limit();
    if (gen->parsed()) return cmd_generate(resolve(gen, gen_args));
    if (train->parsed()) return cmd_train(resolve(train, train_args));
    if (eval->parsed()) return cmd_eval(resolve(eval, eval_args), eval_split, predictions, plots);
    if (predict->parsed()) return cmd_predict(resolve(predict, pred_args), predict_split);
  } catch (const MismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMismatch;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kIo;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
