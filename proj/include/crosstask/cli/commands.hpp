// Copyright 2026 The Crosstask Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "crosstask/cli/config.hpp"
#include "crosstask/core/errors.hpp"
#include "crosstask/core/text.hpp"
#include "crosstask/dsp/features.hpp"
#include "crosstask/dsp/wav.hpp"
#include "crosstask/metrics/classification.hpp"
#include "crosstask/metrics/events.hpp"
#include "crosstask/metrics/report.hpp"
#include "crosstask/model/checkpoint.hpp"
#include "crosstask/train/dataset.hpp"
#include "crosstask/train/inference.hpp"
#include "crosstask/train/manifest.hpp"
#include "crosstask/train/splits.hpp"
#include "crosstask/train/trainer.hpp"

// Files each command reads and writes, relative to the configured paths:
//
//   features  reads  manifest, audio_root/<path>
//             writes features/<clip_id>.ctf, features/params.json, scalers/<split>.cts
//   train     reads  manifest, features/, scalers/
//             writes checkpoints/<split>/{iter_NNNNNN,best,final}.ctc, checkpoints/<split>/train.log
//   infer     reads  manifest, features/, scalers/, checkpoints/<split>/<use_checkpoint>.ctc
//             writes predictions/<split>.csv; frames models also write
//             predictions/<split>_frames/<clip_id>.ctp, predictions/<split>_sed1.csv, predictions/<split>_sed2.csv
//   eval      reads  manifest, predictions/, reference_events (optional)
//             writes reports/<split>.txt
//   report    reads  reports/<split>.txt
//             writes reports/classwise.csv, reports/splits.csv, reports/long.csv

namespace crosstask {

enum ExitCode : int {
  kExitOk = 0,
  kExitGeneric = 1,
  kExitUsage = 2,
  kExitInput = 3,
  kExitVersion = 4,
  kExitFeatureFailures = 5,
  kExitNumeric = 6,
};

/// Feature extraction finished with some clips failing.
class FeatureFailures : public Error {
 public:
  explicit FeatureFailures(std::vector<std::string> failures)
      : Error(summary(failures)), failures_(std::move(failures)) {}
  const std::vector<std::string>& failures() const noexcept { return failures_; }

 private:
  static std::string summary(const std::vector<std::string>& f) {
    std::string out = std::to_string(f.size()) + " clip(s) failed feature extraction";
    for (const auto& s : f) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> failures_;
};

struct CommandContext {
  RunConfig config;
  bool force = false;
  std::optional<std::string> split;       // restrict to one split by name
  std::optional<std::string> checkpoint;  // infer: explicit checkpoint file
  std::ostream* out = nullptr;            // progress and summaries
  std::ostream* err = nullptr;            // warnings

  std::ostream& info() const { return *out; }
  std::ostream& warn() const { return *err; }
};

namespace fs = std::filesystem;

namespace cli_detail {

inline DatasetManifest load_manifest(const RunConfig& c, bool check_audio) {
  const TaskAdapter task = c.adapter();
  std::optional<fs::path> root;
  if (check_audio) root = c.resolve(c.paths.audio_root);
  return parse_manifest(c.resolve(c.paths.manifest), task, root);
}

inline std::vector<Split> selected_splits(const CommandContext& ctx, const DatasetManifest& m) {
  auto splits = make_splits(m, ctx.config.adapter(), ctx.config.folds);
  if (!ctx.split) return splits;
  for (auto& s : splits) {
    if (s.name == *ctx.split) return {s};
  }
  std::string names;
  for (const auto& s : splits) names += (names.empty() ? "" : ", ") + s.name;
  throw ConfigError("unknown split '" + *ctx.split + "' (available: " + names + ")");
}

inline fs::path scaler_path(const RunConfig& c, const std::string& split) {
  return c.resolve(c.paths.scalers) / (split + ".cts");
}
inline fs::path checkpoint_dir(const RunConfig& c, const std::string& split) {
  return c.resolve(c.paths.checkpoints) / split;
}
inline fs::path predictions_path(const RunConfig& c, const std::string& split, const std::string& suffix = "") {
  return c.resolve(c.paths.predictions) / (split + suffix + ".csv");
}
inline fs::path frames_dir(const RunConfig& c, const std::string& split) {
  return c.resolve(c.paths.predictions) / (split + "_frames");
}
inline fs::path report_path(const RunConfig& c, const std::string& split) {
  return c.resolve(c.paths.reports) / (split + ".txt");
}

inline std::string feature_params_json(const RunConfig& c) {
  const Json j = to_json(c)["features"];
  Json f;
  for (const char* k : {"sample_rate", "n_fft", "hop", "n_mels", "f_min", "f_max"}) f[k] = j[k];
  return f.dump(2) + "\n";
}

inline std::size_t cache_bytes(const RunConfig& c) { return c.cache_mb << 20; }

inline FeatureSet load_set(const RunConfig& c, const DatasetManifest& m, const std::vector<std::size_t>& rows,
                           const ScalerStats& scaler) {
  return FeatureSet::from_directory(c.resolve(c.paths.features), m, rows, scaler, c.segment_frames(),
                                    c.features.frames_per_second(), cache_bytes(c));
}

inline ScalerStats load_scaler(const RunConfig& c, const std::string& split) {
  const auto path = scaler_path(c, split);
  if (!fs::exists(path)) throw FormatError(path.string() + " not found (run the features command first)");
  return read_scaler(path);
}

/// Value of a "# key=value" comment line, if present.
inline std::optional<std::string> comment_value(const std::string& text, const std::string& key) {
  const std::string prefix = "# " + key + "=";
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return std::nullopt;
}

}  // namespace cli_detail

// ---------------------------------------------------------------- features

struct FeaturesSummary {
  std::size_t written = 0, up_to_date = 0, scalers_written = 0, scalers_up_to_date = 0;
};

inline FeaturesSummary cmd_features(const CommandContext& ctx) {
  using namespace cli_detail;
  const RunConfig& c = ctx.config;
  validate_config(c);
  const auto manifest = load_manifest(c, true);
  FeaturesSummary sum;
  if (manifest.empty()) {
    ctx.warn() << "warning: manifest has no clips, nothing to do\n";
    return sum;
  }
  const fs::path dir = c.resolve(c.paths.features);
  fs::create_directories(dir);
  const fs::path stamp = dir / "params.json";
  const std::string params = feature_params_json(c);
  const bool stamp_ok = fs::exists(stamp) && read_text_file(stamp) == params;
  if (!stamp_ok) write_text_file(stamp, params);

  const MelFilterbank fb = c.features.filterbank();
  const fs::path audio_root = c.resolve(c.paths.audio_root);
  std::vector<std::string> failures;
  for (const auto& row : manifest.rows) {
    const fs::path audio = audio_root / row.path;
    const fs::path target = feature_path(dir, row.clip_id);
    if (!ctx.force && stamp_ok && fs::exists(target) && fs::last_write_time(target) >= fs::last_write_time(audio)) {
      ++sum.up_to_date;
      continue;
    }
    try {
      write_features(target, extract_log_mel(load_wav(audio), c.features, fb, row.clip_id));
      ++sum.written;
    } catch (const std::exception& e) {
      failures.push_back(row.clip_id + ": " + e.what());
    }
  }
  ctx.info() << "features: written=" << sum.written << " up_to_date=" << sum.up_to_date
             << " failed=" << failures.size() << "\n";
  if (!failures.empty()) throw FeatureFailures(std::move(failures));

  // Standardization statistics per split, from that split's training clips.
  fs::create_directories(c.resolve(c.paths.scalers));
  for (const auto& s : selected_splits(ctx, manifest)) {
    std::vector<LogMelSpectrogram> train;
    for (std::size_t i : s.train) train.push_back(read_features(feature_path(dir, manifest.rows[i].clip_id)));
    const ScalerStats stats = fit_scaler(train, s.name + " training clips=" + std::to_string(train.size()));
    const fs::path path = scaler_path(c, s.name);
    if (!ctx.force && fs::exists(path)) {
      try {
        if (read_scaler(path) == stats) {
          ++sum.scalers_up_to_date;
          continue;
        }
      } catch (const FormatError&) {
        // unreadable or stale format: rewrite below
      }
    }
    write_scaler(path, stats);
    ++sum.scalers_written;
  }
  ctx.info() << "scalers: written=" << sum.scalers_written << " up_to_date=" << sum.scalers_up_to_date << "\n";
  return sum;
}

// ---------------------------------------------------------------- train

inline void cmd_train(const CommandContext& ctx) {
  using namespace cli_detail;
  const RunConfig& c = ctx.config;
  validate_config(c);
  const TaskAdapter task = c.adapter();
  const auto manifest = load_manifest(c, false);
  for (const auto& s : selected_splits(ctx, manifest)) {
    const ScalerStats scaler = load_scaler(c, s.name);
    auto train_set = load_set(c, manifest, s.train, scaler);
    auto val_set = load_set(c, manifest, s.validation, scaler);

    const fs::path dir = checkpoint_dir(c, s.name);
    fs::create_directories(dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.path().extension() == ".ctc" || name == "train.log") fs::remove(entry.path());
    }
    std::ofstream log(dir / "train.log", std::ios::binary | std::ios::trunc);
    if (!log) throw FormatError("cannot write " + (dir / "train.log").string());
    log << seed_comment(c.train.seed) << "# split=" << s.name << "\n";

    TrainOutputs outputs;
    outputs.checkpoint_dir = dir;
    outputs.log = [&](const std::string& line) {
      log << line << '\n';
      log.flush();
      const bool step = line.rfind("iteration=", 0) == 0 && line.find(" lr=") != std::string::npos;
      if (!step) {
        ctx.info() << s.name << ' ' << line << '\n';
      } else {
        const std::size_t i = std::stoul(line.substr(10));
        if ((i + 1) % 100 == 0) ctx.info() << s.name << ' ' << line << '\n';
      }
    };
    train(task, c.model, c.train, train_set, &val_set, outputs);
  }
}

// ---------------------------------------------------------------- infer

inline void cmd_infer(const CommandContext& ctx) {
  using namespace cli_detail;
  const RunConfig& c = ctx.config;
  validate_config(c);
  const TaskAdapter task = c.adapter();
  const auto manifest = load_manifest(c, false);
  fs::create_directories(c.resolve(c.paths.predictions));
  for (const auto& s : selected_splits(ctx, manifest)) {
    const fs::path ckpt_path = ctx.checkpoint ? fs::path(*ctx.checkpoint) : checkpoint_dir(c, s.name) / (c.use_checkpoint + ".ctc");
    const std::string label = ctx.checkpoint ? ckpt_path.string() : c.use_checkpoint;
    if (!fs::exists(ckpt_path)) throw FormatError(ckpt_path.string() + " not found (run the train command first)");
    auto ckpt = load_checkpoint<float>(ckpt_path);
    check_model_matches(ckpt.params.spec, task);

    auto set = load_set(c, manifest, s.validation, load_scaler(c, s.name));
    const auto outputs = infer(ckpt.params, set, c.train.inference_batch);

    PredictionSet preds;
    preds.classes = task.classes;
    for (const auto& o : outputs) preds.clips.push_back({o.clip_id, o.probs});
    write_text_file(predictions_path(c, s.name),
                    "# checkpoint=" + label + "\n" + format_predictions(preds, ckpt.seed));

    if (task.pooling == PoolingMode::frames) {
      const fs::path fdir = frames_dir(c, s.name);
      fs::create_directories(fdir);
      EventMap sed1, sed2;
      for (const auto& o : outputs) {
        FramePrediction fp{o.clip_id, o.frame_probs, o.frames_per_second};
        write_frame_prediction(fdir / (o.clip_id + ".ctp"), fp);
        sed1[o.clip_id] = sed1_decode(o.probs, c.metrics.sed1_threshold, task.clip_seconds);
        sed2[o.clip_id] = sed2_decode(fp.rows(), c.metrics.sed2_high, c.metrics.sed2_low, o.frames_per_second);
        sort_events(sed1[o.clip_id]);
        sort_events(sed2[o.clip_id]);
      }
      write_text_file(predictions_path(c, s.name, "_sed1"), format_events(sed1, task.classes, ckpt.seed));
      write_text_file(predictions_path(c, s.name, "_sed2"), format_events(sed2, task.classes, ckpt.seed));
    }
    ctx.info() << s.name << " infer checkpoint=" << label << " clips=" << outputs.size() << "\n";
  }
}

// ---------------------------------------------------------------- eval

/// Metrics for one split from predictions and the manifest truth.
inline MetricsReport evaluate_split(const RunConfig& c, const DatasetManifest& manifest, const Split& s,
                                    const PredictionSet& preds, const std::optional<EventMap>& reference,
                                    const std::optional<EventMap>& sed1, const std::optional<EventMap>& sed2) {
  const TaskAdapter task = c.adapter();
  if (preds.classes != task.classes) throw FormatError(s.name + ": prediction classes do not match the task vocabulary");
  std::map<std::string, const ClipPrediction*> by_clip;
  for (const auto& p : preds.clips) by_clip[p.clip_id] = &p;

  ProbabilityRows probs;
  std::vector<std::vector<std::size_t>> labels;
  std::set<std::string> expected;
  for (std::size_t i : s.validation) {
    const auto& row = manifest.rows[i];
    expected.insert(row.clip_id);
    auto it = by_clip.find(row.clip_id);
    if (it == by_clip.end()) throw FormatError(s.name + ": no prediction for clip '" + row.clip_id + "'");
    probs.push_back(it->second->probs);
    labels.push_back(row.labels);
  }
  for (const auto& p : preds.clips) {
    if (!expected.contains(p.clip_id)) {
      throw FormatError(s.name + ": prediction for clip '" + p.clip_id + "' outside the validation set");
    }
  }

  MetricsReport r;
  r.task = task.id;
  r.split = s.name;
  r.classes = task.classes;
  const std::size_t k = task.n_classes();
  std::vector<std::size_t> single;
  if (task.arity != LabelArity::multi) {
    for (const auto& l : labels) single.push_back(l.at(0));
  }
  auto add_accuracy = [&](bool macro_scalar) {
    const auto acc = accuracy(probs, single, k);
    r.tables.push_back({"accuracy", acc.classwise});
    if (macro_scalar) r.scalars.emplace_back("accuracy", acc.classwise.average);
    r.scalars.emplace_back("accuracy_micro", acc.micro);
  };
  switch (task.id) {
    case 1:
      add_accuracy(true);
      break;
    case 2:
      add_accuracy(false);
      r.scalars.emplace_back("map@" + std::to_string(c.metrics.map_k), map_at_k(probs, single, c.metrics.map_k));
      break;
    case 3: {
      add_accuracy(false);
      std::vector<double> scores;
      std::vector<bool> positive;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        scores.push_back(probs[i][1]);
        positive.push_back(single[i] == 1);
      }
      const auto pos = std::count(positive.begin(), positive.end(), true);
      if (pos > 0 && static_cast<std::size_t>(pos) < positive.size()) {
        r.scalars.emplace_back("auc", roc_auc(scores, positive));
      }
      break;
    }
    case 4: {
      std::vector<std::vector<bool>> truth(labels.size(), std::vector<bool>(k, false));
      for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t l : labels[i]) truth[i][l] = true;
      const auto auc = tagging_auc(probs, truth);
      r.tables.push_back({"at_auc", auc});
      r.scalars.emplace_back("at_auc", auc.average);
      if (reference && sed1 && sed2) {
        EventMap ref, est1, est2;
        for (const auto& id : expected) {
          if (auto it = reference->find(id); it != reference->end()) ref[id] = it->second;
          if (auto it = sed1->find(id); it != sed1->end()) est1[id] = it->second;
          if (auto it = sed2->find(id); it != sed2->end()) est2[id] = it->second;
        }
        const auto f1 = event_f1(ref, est1, k, c.metrics.collar);
        const auto f2 = event_f1(ref, est2, k, c.metrics.collar);
        r.tables.push_back({"sed1_f1", f1});
        r.tables.push_back({"sed2_f1", f2});
        r.scalars.emplace_back("sed1_f1", f1.average);
        r.scalars.emplace_back("sed2_f1", f2.average);
      }
      break;
    }
    case 5: {
      const auto f1 = f1_per_class(probs, single, k);
      r.tables.push_back({"f1", f1});
      r.scalars.emplace_back("f1", f1.average);
      r.scalars.emplace_back("accuracy_micro", accuracy(probs, single, k).micro);
      break;
    }
    default:
      throw ConfigError("task must be 1-5");
  }
  return r;
}

inline void cmd_eval(const CommandContext& ctx) {
  using namespace cli_detail;
  const RunConfig& c = ctx.config;
  validate_config(c);
  const TaskAdapter task = c.adapter();
  const auto manifest = load_manifest(c, false);
  std::optional<EventMap> reference;
  if (task.pooling == PoolingMode::frames && !c.paths.reference_events.empty()) {
    const fs::path p = c.resolve(c.paths.reference_events);
    reference = parse_events(read_text_file(p), task.classes, p.string());
  }
  fs::create_directories(c.resolve(c.paths.reports));
  for (const auto& s : selected_splits(ctx, manifest)) {
    const fs::path p = predictions_path(c, s.name);
    if (!fs::exists(p)) throw FormatError(p.string() + " not found (run the infer command first)");
    const std::string text = read_text_file(p);
    const auto preds = parse_predictions(text, p.string());
    std::optional<EventMap> sed1, sed2;
    if (reference) {
      const fs::path p1 = predictions_path(c, s.name, "_sed1"), p2 = predictions_path(c, s.name, "_sed2");
      sed1 = parse_events(read_text_file(p1), task.classes, p1.string());
      sed2 = parse_events(read_text_file(p2), task.classes, p2.string());
    }
    MetricsReport r = evaluate_split(c, manifest, s, preds, reference, sed1, sed2);
    r.checkpoint = comment_value(text, "checkpoint").value_or("unknown");
    if (auto seed = comment_value(text, "seed")) {
      if (auto v = parse_int(*seed); v && *v >= 0) r.seed = static_cast<std::uint64_t>(*v);
    }
    write_text_file(report_path(c, s.name), format_report(r));
    ctx.info() << s.name << " eval";
    for (const auto& [name, value] : r.scalars) ctx.info() << ' ' << name << '=' << format_real(value);
    ctx.info() << '\n';
  }
}

// ---------------------------------------------------------------- report

inline void cmd_report(const CommandContext& ctx) {
  using namespace cli_detail;
  const RunConfig& c = ctx.config;
  validate_config(c);
  const auto manifest = load_manifest(c, false);
  std::vector<MetricsReport> reports;
  for (const auto& s : selected_splits(ctx, manifest)) {
    const fs::path p = report_path(c, s.name);
    if (!fs::exists(p)) throw FormatError(p.string() + " not found (run the eval command first)");
    reports.push_back(parse_report(read_text_file(p), p.string()));
  }
  const fs::path dir = c.resolve(c.paths.reports);
  write_text_file(dir / "classwise.csv", classwise_table_csv(reports));
  write_text_file(dir / "splits.csv", split_table_csv(reports));
  write_text_file(dir / "long.csv", long_table_csv(reports));
  ctx.info() << "report: " << reports.size() << " split(s) -> classwise.csv, splits.csv, long.csv\n";
}

/// Maps an exception from a command to its documented exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const FeatureFailures*>(&e)) return kExitFeatureFailures;
  if (dynamic_cast<const VersionError*>(&e)) return kExitVersion;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) return kExitUsage;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kExitInput;
  }
  return kExitGeneric;
}

}  // namespace crosstask
