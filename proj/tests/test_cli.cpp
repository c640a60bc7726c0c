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

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crosstask/cli/commands.hpp"
#include "crosstask/cli/config.hpp"

namespace {

using namespace crosstask;
namespace fs = std::filesystem;

const fs::path kFixture = fs::absolute("fixtures/pipeline");
const fs::path kGolden = fs::absolute("golden/pipeline");

struct RunResult {
  int code = -1;
  std::string out, err;
};

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

/// Runs the CLI binary in `dir` and captures both streams.
RunResult run_cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / ".stdout", err = dir / ".stderr";
  const std::string cmd = "cd " + quoted(dir) + " && " + quoted(CROSSTASK_CLI) + " " + args + " >" + quoted(out) +
                          " 2>" + quoted(err);
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out);
  r.err = read_text_file(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

fs::path scratch_root() { return fs::temp_directory_path() / ("crosstask_cli_" + std::to_string(::getpid())); }

class ScratchCleanup : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(scratch_root()); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch_dir(const std::string& name) {
  const fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

fs::path copy_fixture(const std::string& dataset, const std::string& name) {
  const fs::path dst = scratch_dir(name);
  fs::copy(kFixture / dataset, dst, fs::copy_options::recursive);
  return dst;
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

// ---------------------------------------------------------------- config

TEST(Config, CanonicalFormRoundTrips) {
  RunConfig c;
  c.task = 4;
  c.train.max_iterations = 123;
  c.paths.reference_events = "ref.csv";
  const std::string text = canonical_json(c);
  const RunConfig back = config_from_json(parse_json_text(text, "test"));
  EXPECT_EQ(canonical_json(back), text);
  EXPECT_EQ(text.back(), '\n');
}

TEST(Config, UnknownKeyNamesFullPath) {
  try {
    config_from_json(Json::parse(R"({"train": {"max_iteration": 5}})"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(contains(e.what(), "train.max_iteration")) << e.what();
  }
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"train": {"max_iterations": "many"}})")), ConfigError);
}

TEST(Config, OverridesParseJsonThenString) {
  RunConfig c = apply_overrides(RunConfig{}, {"train.max_iterations=200", "model=cnn4", "metrics.collar=0.5"});
  EXPECT_EQ(c.train.max_iterations, 200u);
  EXPECT_EQ(c.model, Variant::cnn4);
  EXPECT_DOUBLE_EQ(c.metrics.collar, 0.5);
  EXPECT_THROW(apply_overrides(RunConfig{}, {"no_equals_sign"}), ConfigError);
  EXPECT_THROW(apply_overrides(RunConfig{}, {"paths.nope=1"}), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  RunConfig c;
  c.features.n_mels = 40;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = RunConfig{};
  c.features.n_fft = 1000;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = RunConfig{};
  c.metrics.sed2_low = 0.9;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = RunConfig{};
  c.use_checkpoint = "latest";
  EXPECT_THROW(validate_config(c), ConfigError);
  EXPECT_NO_THROW(validate_config(RunConfig{}));
}

TEST(Config, PathsResolveAgainstConfigFile) {
  const fs::path dir = copy_fixture("scenes", "resolve");
  const RunConfig c = load_config(dir / "config.json");
  EXPECT_EQ(c.resolve(c.paths.manifest), dir / "manifest.csv");
  EXPECT_EQ(c.resolve("/abs/x"), fs::path("/abs/x"));
}

// ---------------------------------------------------------------- exit codes

TEST(ExitCodes, UsageErrors) {
  const fs::path dir = scratch_dir("usage");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli(dir, "").code, kExitUsage);
  EXPECT_EQ(run_cli(dir, "frobnicate").code, kExitUsage);
  const auto unknown = run_cli(dir, "--set train.bogus=1 config");
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_TRUE(contains(unknown.err, "train.bogus")) << unknown.err;
  EXPECT_EQ(run_cli(dir, "--config missing.json config").code, kExitUsage);
}

TEST(ExitCodes, ConfigCommandPrintsCanonicalJson) {
  const fs::path dir = scratch_dir("show");
  fs::create_directories(dir);
  const auto r = run_cli(dir, "--set task=3 --seed 11 config");
  ASSERT_EQ(r.code, kExitOk) << r.err;
  RunConfig expected;
  expected.task = 3;
  expected.train.seed = 11;
  EXPECT_EQ(r.out, canonical_json(expected));
}

TEST(ExitCodes, ConfigFromEnvironment) {
  const fs::path dir = copy_fixture("scenes", "env");
  const std::string cmd = "cd " + quoted(dir) + " && " + kConfigEnv + "=config.json " + quoted(CROSSTASK_CLI) +
                          " config > out.json";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(contains(read_text_file(dir / "out.json"), "\"cnn4\""));
}

TEST(ExitCodes, EmptyManifestWarnsAndSucceeds) {
  const fs::path dir = scratch_dir("empty");
  fs::create_directories(dir);
  write_text_file(dir / "manifest.csv", "clip_id,path,labels,fold,verified\n");
  const auto r = run_cli(dir, "--set task=1 features");
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(contains(r.err, "warning")) << r.err;
}

TEST(ExitCodes, BadManifestIsInputError) {
  const fs::path dir = copy_fixture("scenes", "badmanifest");
  std::string text = read_text_file(dir / "manifest.csv");
  text += "scene_99,audio/missing.wav,tone_low,1,1\n";
  write_text_file(dir / "manifest.csv", text);
  const auto r = run_cli(dir, "--config config.json features");
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_TRUE(contains(r.err, "row 26")) << r.err;
}

TEST(ExitCodes, FeatureFailuresKeepTheRest) {
  const fs::path dir = copy_fixture("scenes", "failures");
  ASSERT_EQ(run_cli(dir, "--config config.json features").code, kExitOk);
  const auto forced = run_cli(dir, "--config config.json --force features");
  ASSERT_EQ(forced.code, kExitOk);
  EXPECT_TRUE(contains(forced.out, "written=24 up_to_date=0")) << forced.out;

  write_text_file(dir / "audio" / "scene_03.wav", "not a wav file");
  const auto r = run_cli(dir, "--config config.json features");
  EXPECT_EQ(r.code, kExitFeatureFailures);
  EXPECT_TRUE(contains(r.out, "written=0 up_to_date=23 failed=1")) << r.out;
  EXPECT_TRUE(contains(r.err, "scene_03")) << r.err;
}

TEST(ExitCodes, UnknownSplitIsUsageError) {
  const fs::path dir = copy_fixture("scenes", "split");
  EXPECT_EQ(run_cli(dir, "--config config.json train --split fold9").code, kExitUsage);
}

// ---------------------------------------------------------------- eval on exact predictions

TEST(Eval, OneHotTruthScoresPerfectly) {
  for (const int task_id : {1, 4}) {
    const std::string dataset = task_id == 1 ? "scenes" : "events";
    const RunConfig c = load_config(kFixture / dataset / "config.json");
    const TaskAdapter task = c.adapter();
    const auto manifest = parse_manifest(kFixture / dataset / "manifest.csv", task);
    const auto splits = make_splits(manifest, task, {});
    ASSERT_EQ(splits.size(), 1u);
    PredictionSet preds{task.classes, {}};
    for (std::size_t i : splits[0].validation) {
      std::vector<double> p(task.n_classes(), 0.0);
      for (std::size_t l : manifest.rows[i].labels) p[l] = 1.0;
      preds.clips.push_back({manifest.rows[i].clip_id, p});
    }
    std::optional<EventMap> ref;
    if (task_id == 4) {
      const fs::path p = kFixture / dataset / "reference_events.csv";
      ref = parse_events(read_text_file(p), task.classes, p.string());
    }
    const auto r = evaluate_split(c, manifest, splits[0], preds, ref, ref, ref);
    ASSERT_FALSE(r.scalars.empty());
    for (const auto& [name, value] : r.scalars) EXPECT_DOUBLE_EQ(value, 1.0) << dataset << " " << name;
    for (const auto& t : r.tables) {
      for (const auto& v : t.scores.per_class) {
        if (v) EXPECT_DOUBLE_EQ(*v, 1.0) << dataset << " " << t.name;
      }
    }
  }
}

TEST(Eval, MissingPredictionIsInputError) {
  const RunConfig c = load_config(kFixture / "scenes" / "config.json");
  const auto manifest = parse_manifest(kFixture / "scenes" / "manifest.csv", c.adapter());
  const auto splits = make_splits(manifest, c.adapter(), {});
  PredictionSet preds{c.adapter().classes, {}};
  EXPECT_THROW(evaluate_split(c, manifest, splits[0], preds, {}, {}, {}), FormatError);
}

// ---------------------------------------------------------------- full pipeline

struct PipelineRun {
  fs::path dir;
  std::vector<std::pair<std::string, RunResult>> steps;
  RunResult features_again;
};

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    for (const char* dataset : {"scenes", "events"}) {
      PipelineRun run;
      run.dir = copy_fixture(dataset, std::string("pipeline_") + dataset);
      for (const char* step : {"features", "train", "infer", "eval", "report"}) {
        run.steps.emplace_back(step, run_cli(run.dir, std::string("--config config.json ") + step));
        if (std::string(step) == "features") run.features_again = run_cli(run.dir, "--config config.json features");
      }
      runs().emplace(dataset, std::move(run));
    }
  }

  static std::map<std::string, PipelineRun>& runs() {
    static std::map<std::string, PipelineRun> r;
    return r;
  }

  static void expect_golden(const std::string& dataset, const std::string& file) {
    const fs::path produced = runs().at(dataset).dir / "work" / "reports" / file;
    const fs::path golden = kGolden / dataset / file;
    ASSERT_TRUE(fs::exists(produced)) << produced;
    if (std::getenv("CROSSTASK_UPDATE_GOLDEN")) {
      fs::create_directories(golden.parent_path());
      fs::copy_file(produced, golden, fs::copy_options::overwrite_existing);
    }
    ASSERT_TRUE(fs::exists(golden)) << golden << " (set CROSSTASK_UPDATE_GOLDEN=1 to create)";
    EXPECT_EQ(read_text_file(produced), read_text_file(golden)) << dataset << "/" << file;
  }
};

TEST_F(Pipeline, EveryStepExitsZero) {
  for (const auto& [dataset, run] : runs()) {
    for (const auto& [step, r] : run.steps) EXPECT_EQ(r.code, kExitOk) << dataset << " " << step << ": " << r.err;
  }
}

TEST_F(Pipeline, FeaturesAreIdempotent) {
  for (const auto& [dataset, run] : runs()) {
    EXPECT_TRUE(contains(run.steps[0].second.out, "written=24 up_to_date=0 failed=0")) << run.steps[0].second.out;
    EXPECT_TRUE(contains(run.features_again.out, "written=0 up_to_date=24 failed=0")) << run.features_again.out;
    EXPECT_TRUE(contains(run.features_again.out, "scalers: written=0 up_to_date=1")) << run.features_again.out;
  }
}

TEST_F(Pipeline, FeatureShape) {
  const fs::path dir = runs().at("scenes").dir / "work" / "features";
  for (const char* id : {"scene_00", "scene_01", "scene_02"}) {
    const auto x = read_features(feature_path(dir, id));
    EXPECT_EQ(x.clip_id, id);
    EXPECT_EQ(x.frames(), 1u + 8000u / 256u);
    EXPECT_EQ(x.bins(), 64u);
    EXPECT_DOUBLE_EQ(x.frames_per_second, 8000.0 / 256.0);
  }
}

TEST_F(Pipeline, CheckpointsAndLog) {
  const fs::path dir = runs().at("scenes").dir / "work" / "checkpoints" / "fold2";
  for (const char* f : {"iter_000020.ctc", "iter_000040.ctc", "final.ctc", "best.ctc", "train.log"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto lines = content_lines(read_text_file(dir / "train.log"));
  std::size_t steps = 0;
  for (const auto& l : lines) steps += l.second.starts_with("iteration=") && contains(l.second, " loss=");
  EXPECT_EQ(steps, 40u);
}

TEST_F(Pipeline, ScenesAreLearned) {
  const auto r = parse_report(read_text_file(runs().at("scenes").dir / "work" / "reports" / "fold2.txt"), "fold2");
  ASSERT_TRUE(r.scalar("accuracy"));
  EXPECT_GE(*r.scalar("accuracy"), 0.95);
  EXPECT_EQ(r.checkpoint, "final");
  EXPECT_EQ(r.seed, 7u);
}

TEST_F(Pipeline, EventOutputsWritten) {
  const fs::path dir = runs().at("events").dir / "work" / "predictions";
  for (const char* f : {"fold2.csv", "fold2_sed1.csv", "fold2_sed2.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::size_t frames = 0;
  for (const auto& e : fs::directory_iterator(dir / "fold2_frames")) frames += e.path().extension() == ".ctp";
  EXPECT_EQ(frames, 9u);
  const auto r = parse_report(read_text_file(runs().at("events").dir / "work" / "reports" / "fold2.txt"), "fold2");
  for (const char* name : {"at_auc", "sed1_f1", "sed2_f1"}) EXPECT_TRUE(r.scalar(name)) << name;
}

TEST_F(Pipeline, ReportsMatchGolden) {
  for (const char* dataset : {"scenes", "events"}) {
    for (const char* file : {"fold2.txt", "classwise.csv", "splits.csv", "long.csv"}) expect_golden(dataset, file);
  }
}

TEST_F(Pipeline, BestCheckpointIsLabelled) {
  const fs::path dir = runs().at("scenes").dir;
  const std::string sets = "--config config.json --set train.use_checkpoint=best paths.predictions=work/pred_best "
                           "paths.reports=work/rep_best ";
  ASSERT_EQ(run_cli(dir, sets + "infer").code, kExitOk);
  ASSERT_EQ(run_cli(dir, sets + "eval").code, kExitOk);
  const auto r = parse_report(read_text_file(dir / "work" / "rep_best" / "fold2.txt"), "fold2");
  EXPECT_EQ(r.checkpoint, "best");
}

TEST_F(Pipeline, VersionMismatchNamesBothVersions) {
  const fs::path dir = runs().at("scenes").dir;
  const fs::path ckpt = dir / "work" / "checkpoints" / "fold2" / "final.ctc";
  const fs::path patched = dir / "old.ctc";
  fs::copy_file(ckpt, patched, fs::copy_options::overwrite_existing);
  {
    std::fstream f(patched, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v99[4] = {99, 0, 0, 0};
    f.write(v99, 4);
  }
  const auto r = run_cli(dir, "--config config.json --set paths.predictions=work/pred_old infer --checkpoint old.ctc");
  EXPECT_EQ(r.code, kExitVersion) << r.err;
  EXPECT_TRUE(contains(r.err, "version 99")) << r.err;
  EXPECT_TRUE(contains(r.err, "expected " + std::to_string(kCheckpointVersion))) << r.err;
}

}  // namespace
