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

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crosstask/cli/commands.hpp"
#include "crosstask/cli/config.hpp"

namespace {

using namespace crosstask;

RunConfig resolve_config(const std::string& flag_path, const std::vector<std::string>& sets,
                         const std::optional<std::uint64_t>& seed) {
  std::string path = flag_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
  }
  RunConfig c = path.empty() ? RunConfig{} : load_config(path);
  c = apply_overrides(c, sets);
  if (seed) c.train.seed = *seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio classification and detection baselines: features, train, infer, eval, report"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool force = false;
  app.add_option("--config", config_path,
                 std::string("Run config JSON (default: $") + kConfigEnv + ", else built-in defaults)");
  app.add_option("--set", sets, "Override a config key, e.g. --set train.max_iterations=200")->take_all();
  app.add_option("--seed", seed, "Training seed (overrides train.seed)");
  app.add_flag("--force", force, "Recompute outputs that look up to date");

  std::string split, checkpoint;
  auto* features = app.add_subcommand("features", "Extract log-mel features and fit per-split scalers");
  auto* train_cmd = app.add_subcommand("train", "Train one model per split");
  auto* infer_cmd = app.add_subcommand("infer", "Predict the validation clips of each split");
  auto* eval = app.add_subcommand("eval", "Score predictions against the manifest labels");
  auto* report = app.add_subcommand("report", "Tabulate metrics reports as CSV");
  auto* show = app.add_subcommand("config", "Print the effective config in canonical form");
  for (auto* sub : {features, train_cmd, infer_cmd, eval, report}) {
    sub->add_option("--split", split, "Only this split, e.g. fold1");
    sub->fallthrough();
  }
  show->fallthrough();
  infer_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file instead of the configured one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandContext ctx;
    ctx.config = resolve_config(config_path, sets, seed);
    ctx.force = force;
    if (!split.empty()) ctx.split = split;
    if (!checkpoint.empty()) ctx.checkpoint = checkpoint;
    ctx.out = &std::cout;
    ctx.err = &std::cerr;
    if (show->parsed()) {
      validate_config(ctx.config);
      std::cout << canonical_json(ctx.config);
    } else if (features->parsed()) {
      cmd_features(ctx);
    } else if (train_cmd->parsed()) {
      cmd_train(ctx);
    } else if (infer_cmd->parsed()) {
      cmd_infer(ctx);
    } else if (eval->parsed()) {
      cmd_eval(ctx);
    } else if (report->parsed()) {
      cmd_report(ctx);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
