/*
 * Copyright 2026 The F2A Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "f2a/commands.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("-c,--config", opts.config, "Configuration file (key = value lines)");
  sub->add_option("--set", opts.overrides, "Override a configuration key (key=value); repeatable");
  sub->add_flag("--force", opts.force, "Overwrite existing outputs");
}

f2a::RunSettings load_settings(const CommonOptions& opts) {
  f2a::RunConfig cfg;
  if (!opts.config.empty()) cfg.load_file(opts.config);
  for (const auto& o : opts.overrides) cfg.set_override(o);
  return cfg.settings();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented anomaly prediction for multivariate time series"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string stage = "all";
  auto* synth = app.add_subcommand("synth", "Generate the synthetic precursor-anomaly dataset");
  auto* build_db = app.add_subcommand("build-db", "Build the retrieval store from the pretrained encoder");
  auto* train = app.add_subcommand("train", "Pretrain the forecaster and/or fine-tune the fusion model");
  train->add_option("--stage", stage, "pretrain, finetune or all")->check(CLI::IsMember({"pretrain", "finetune", "all"}));
  auto* predict = app.add_subcommand("predict", "Write stitched anomaly scores for the evaluation windows");
  auto* eval = app.add_subcommand("eval", "Compute the metric report from the score files");
  auto* ablate = app.add_subcommand("ablate", "Run the retrieval-count, lambda and psi sweeps");
  for (auto* sub : {synth, build_db, train, predict, eval, ablate}) add_common(sub, opts);

  CLI11_PARSE(app, argc, argv);

  const auto log = [](const std::string& line) { std::cout << line << '\n'; };
  try {
    const f2a::RunSettings settings = load_settings(opts);
    if (*synth) f2a::cmd::synth(settings, opts.force, log);
    if (*build_db) f2a::cmd::build_db(settings, opts.force, log);
    if (*train) f2a::cmd::train(settings, f2a::cmd::parse_stage(stage), opts.force, log);
    if (*predict) f2a::cmd::predict(settings, opts.force, log);
    if (*eval) f2a::cmd::eval(settings, opts.force, log);
    if (*ablate) f2a::cmd::ablate(settings, opts.force, log);
  } catch (const f2a::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
