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

// Checkpoints: one torch archive holding the weights, the optimiser
// state and a JSON metadata string (topology, training config, epochs
// completed, code version).

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "spineloc/error.hpp"
#include "spineloc/nets.hpp"
#include "spineloc/training.hpp"
#include "spineloc/version.hpp"

namespace spineloc {

struct CheckpointMeta {
  std::string model;  // "detection" or "identification"
  UNetConfig topology;
  TrainConfig train;
  Index3 patch_extent{};
  std::int64_t epochs_completed = 0;
  std::string version = kVersionTag;
};

inline nlohmann::json to_json(const CheckpointMeta& m) {
  return {{"model", m.model},
          {"topology", to_json(m.topology)},
          {"train", to_json(m.train)},
          {"patch_extent", m.patch_extent},
          {"epochs_completed", m.epochs_completed},
          {"version", m.version}};
}

template <typename Net>
constexpr const char* model_name() {
  return std::is_same_v<Net, DetectionNet> ? "detection" : "identification";
}

template <typename Net>
void save_checkpoint(const std::filesystem::path& path, Trainer<Net>& trainer, const Index3& patch_extent) {
  CheckpointMeta meta;
  meta.model = model_name<Net>();
  meta.topology = trainer.net()->config();
  meta.train = trainer.config();
  meta.patch_extent = patch_extent;
  meta.epochs_completed = trainer.epochs_completed();

  torch::serialize::OutputArchive archive;
  trainer.net()->save(archive);
  torch::serialize::OutputArchive optimizer;
  trainer.optimizer().save(optimizer);
  archive.write("optimizer", optimizer);
  archive.write("spineloc_meta", c10::IValue(to_json(meta).dump()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

inline CheckpointMeta read_checkpoint_meta(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  c10::IValue value;
  if (!archive.try_read("spineloc_meta", value) || !value.isString()) {
    raise<IoError>("'", path.string(), "' is not a spineloc checkpoint");
  }
  const auto j = nlohmann::json::parse(value.toStringRef());
  CheckpointMeta m;
  m.model = j.at("model").get<std::string>();
  m.topology = unet_config_from_json(j.at("topology"), m.model == "detection" ? UNetConfig::detection()
                                                                              : UNetConfig::identification());
  m.train = train_config_from_json(j.at("train"), TrainConfig{});
  m.patch_extent = j.at("patch_extent").get<Index3>();
  m.epochs_completed = j.at("epochs_completed").get<std::int64_t>();
  m.version = j.value("version", std::string{});
  return m;
}

template <typename Net>
struct LoadedModel {
  Net net;
  CheckpointMeta meta;
  torch::serialize::InputArchive optimizer_state;
  bool has_optimizer_state = false;
};

template <typename Net>
LoadedModel<Net> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) raise<IoError>("missing checkpoint '", path.string(), "'");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    raise<IoError>("cannot read checkpoint '", path.string(), "': ", e.what_without_backtrace());
  }
  CheckpointMeta meta = read_checkpoint_meta(archive, path);
  if (meta.model != model_name<Net>()) {
    raise<IoError>("'", path.string(), "' holds a ", meta.model, " model, expected ", model_name<Net>());
  }
  Net net(meta.topology);
  net->load(archive);
  LoadedModel<Net> out{net, meta, {}, false};
  out.has_optimizer_state = archive.try_read("optimizer", out.optimizer_state);
  return out;
}

}  // namespace spineloc
