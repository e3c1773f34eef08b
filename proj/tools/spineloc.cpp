/*
 *  Copyright 2026 The spineloc Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */


#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "spineloc/spineloc.hpp"

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string train_dir;
  std::string test_dir;
};

spineloc::PipelineConfig resolve(const Globals& g) {
  spineloc::PipelineConfig cfg = g.config.empty() ? spineloc::PipelineConfig{} : spineloc::load_pipeline_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.output_dir.empty()) cfg.output_dir = g.output_dir;
  if (!g.train_dir.empty()) cfg.train_dir = g.train_dir;
  if (!g.test_dir.empty()) cfg.test_dir = g.test_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertebra localization and identification in spine CT"};
  app.set_version_flag("--version", std::string(spineloc::kVersionTag));
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "root seed, overrides the config");
  app.add_option("--output-dir", g.output_dir, "output directory, overrides the config");
  app.add_option("--train-dir", g.train_dir, "training scans, overrides the config");
  app.add_option("--test-dir", g.test_dir, "test scans, overrides the config");

  auto* make_labels = app.add_subcommand("make-labels", "resample training scans and build dense label maps");
  auto* sample = app.add_subcommand("sample", "draw training patches for both networks");

  spineloc::TrainOptions train_opt;
  std::string patches;
  auto* train = app.add_subcommand("train", "train one network");
  train->add_option("model", train_opt.model, "detection or identification")
      ->required()
      ->check(CLI::IsMember({"detection", "identification"}));
  train->add_option("--patches", patches, "patch directory (default: the model's own)");
  train->add_flag("--resume", train_opt.resume, "continue from the existing checkpoint");

  spineloc::PredictOptions predict_opt;
  std::string scan;
  bool save_maps = false;
  auto* predict = app.add_subcommand("predict", "localize and identify vertebrae");
  predict->add_option("--scan", scan, "single scan (default: every scan in the test directory)");
  predict->add_flag("--stub", predict_opt.stub, "use the analytic stand-in networks");
  predict->add_flag("--save-maps", save_maps, "also write detection, identification and fused maps");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");

  std::string report_path, plot_path;
  auto* plot = app.add_subcommand("plot", "per-vertebra error box plot from a report");
  plot->add_option("--report", report_path, "report JSON (default: <output>/evaluation/report.json)");
  plot->add_option("--output", plot_path, "image path (default: <output>/evaluation/per_vertebra.png)");

  spineloc::SynthOptions synth_opt;
  std::vector<std::int64_t> extent;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset readable by the stub networks");
  synth->add_option("dir", synth_opt.dir, "destination")->required();
  synth->add_option("--train", synth_opt.train, "training scans")->check(CLI::NonNegativeNumber);
  synth->add_option("--test", synth_opt.test, "test scans")->check(CLI::NonNegativeNumber);
  synth->add_option("--extent", extent, "volume extent X Y Z")->expected(3);
  synth->add_option("--count", synth_opt.count, "vertebrae per scan")->check(CLI::Range(1, 26));
  synth->add_option("--step", synth_opt.step_mm, "centroid spacing along z (mm)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : spineloc::kExitFatal;
  }

  try {
    spineloc::PipelineConfig cfg = resolve(g);
    if (*make_labels) return spineloc::cmd_make_labels(cfg);
    if (*sample) return spineloc::cmd_sample(cfg);
    if (*train) {
      if (!patches.empty()) train_opt.patches = patches;
      return spineloc::cmd_train(cfg, train_opt);
    }
    if (*predict) {
      if (!scan.empty()) predict_opt.scan = scan;
      cfg.save_maps = cfg.save_maps || save_maps;
      return spineloc::cmd_predict(cfg, predict_opt);
    }
    if (*evaluate) return spineloc::cmd_evaluate(cfg);
    if (*plot) {
      const auto dir = spineloc::evaluation_dir(cfg);
      return spineloc::cmd_plot(report_path.empty() ? dir / "report.json" : std::filesystem::path(report_path),
                                plot_path.empty() ? dir / "per_vertebra.png" : std::filesystem::path(plot_path));
    }
    if (*synth) {
      if (!extent.empty()) synth_opt.extent = {extent[0], extent[1], extent[2]};
      synth_opt.seed = cfg.seed;
      return spineloc::cmd_synth(synth_opt, cfg);
    }
  } catch (const spineloc::Error& e) {
    spineloc::log::error(e.what());
    return spineloc::kExitFatal;
  } catch (const std::exception& e) {
    spineloc::log::error(e.what());
    return spineloc::kExitFatal;
  }
  return spineloc::kExitFatal;
}
