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


// Pipeline configuration. Every hyperparameter has a default here and in
// config/default.json; a config file only needs the keys it changes.

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "spineloc/aggregate.hpp"
#include "spineloc/centroids.hpp"
#include "spineloc/dense_label.hpp"
#include "spineloc/error.hpp"
#include "spineloc/inference.hpp"
#include "spineloc/nets.hpp"
#include "spineloc/sampler.hpp"
#include "spineloc/stubs.hpp"
#include "spineloc/training.hpp"
#include "spineloc/volume_io.hpp"

namespace spineloc {

struct ElasticConfig {
  double sigma = 0.7;  // control-point displacement std, pixels
  int grid = 3;
};

struct ModelConfig {
  TrainConfig train;
  UNetConfig topology;
  std::filesystem::path checkpoint;  // empty: <output_dir>/models/<name>.pt
};

struct PipelineConfig {
  std::filesystem::path train_dir;
  std::filesystem::path test_dir;
  std::filesystem::path output_dir = "spineloc-out";
  std::uint64_t seed = 0;

  AnnotationConvention annotation;  // source spacing is taken from each scan
  std::string annotation_suffix = ".txt";
  nlohmann::json radii_override = nlohmann::json::object();

  std::int64_t detection_per_scan = 5;
  std::int64_t identification_per_scan = 100;
  SamplerConfig sampler;
  ElasticConfig elastic;

  ModelConfig detection{TrainConfig::detection(), UNetConfig::detection(), {}};
  ModelConfig identification{TrainConfig::identification(), UNetConfig::identification(), {}};
  double validation_fraction = 0.1;

  TilingParams tiling;
  SlabParams slab;
  VoteRule vote;
  StubConfig stub;
  bool save_maps = false;

  RadiiTable radii() const {
    RadiiTable r;
    r.apply_overrides(radii_override);
    return r;
  }

  std::filesystem::path checkpoint_path(const std::string& model) const {
    const auto& m = model == "detection" ? detection : identification;
    return m.checkpoint.empty() ? output_dir / "models" / (model + ".pt") : m.checkpoint;
  }

  // Rejects non-positive hyperparameters and missing directories before
  // any heavy work starts.
  void validate() const {
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0)) raise<InvalidArgument>("config: ", what, " must be positive, got ", v);
    };
    auto positive_extent = [&](const Index3& e, const char* what) {
      for (auto v : e) positive(static_cast<double>(v), what);
    };
    for (const auto* dir : {&train_dir, &test_dir}) {
      if (!dir->empty() && !std::filesystem::is_directory(*dir)) {
        raise<InvalidArgument>("config: directory '", dir->string(), "' does not exist");
      }
    }
    if (output_dir.empty()) raise<InvalidArgument>("config: output_dir must be set");
    if (annotation_suffix.empty()) raise<InvalidArgument>("config: annotation suffix must be set");
    (void)radii();
    positive(static_cast<double>(detection_per_scan), "sampler.detection_per_scan");
    positive(static_cast<double>(identification_per_scan), "sampler.identification_per_scan");
    positive_extent(sampler.detection_patch, "sampler.detection_patch");
    positive_extent(sampler.identification_patch, "sampler.identification_patch");
    positive(sampler.positive_fraction, "sampler.positive_fraction");
    positive(sampler.max_attempts, "sampler.max_attempts");
    sampler.validate();
    positive(elastic.sigma, "elastic.sigma");
    if (elastic.grid < 2) raise<InvalidArgument>("config: elastic.grid must be at least 2");
    for (const auto* m : {&detection, &identification}) {
      positive(m->train.learning_rate, "learning_rate");
      positive(static_cast<double>(m->train.batch_size), "batch_size");
      positive(static_cast<double>(m->train.epochs), "epochs");
      positive(m->train.bn_momentum, "bn_momentum");
      m->train.validate();
      m->topology.validate();
    }
    if (detection.topology.dims() != 3 || detection.topology.in_channels != 1 || detection.topology.out_channels != 2) {
      raise<InvalidArgument>("config: detection topology must be 3D with 1 input and 2 output channels");
    }
    if (identification.topology.dims() != 2 || identification.topology.out_channels != 1 ||
        identification.topology.in_channels != sampler.identification_patch[0]) {
      raise<InvalidArgument>("config: identification topology must be 2D, one output, one input per slab slice");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      raise<InvalidArgument>("config: validation_fraction must lie in [0, 1)");
    }
    tiling.validate();
    slab.validate();
    if (slab.slices != sampler.identification_patch[0] || slab.target_slice != sampler.identification_label_slice) {
      raise<InvalidArgument>("config: inference slab must match the identification patch slab");
    }
    const auto dm = detection.topology.size_multiple();
    const auto im = identification.topology.size_multiple();
    for (std::size_t a = 0; a < 3; ++a) {
      if (tiling.patch[a] % dm != 0 || sampler.detection_patch[a] % dm != 0) {
        raise<InvalidArgument>("config: detection extents must be multiples of ", dm);
      }
    }
    if (slab.multiple % im != 0 || sampler.identification_patch[1] % im != 0 ||
        sampler.identification_patch[2] % im != 0) {
      raise<InvalidArgument>("config: identification extents must be multiples of ", im);
    }
    positive(vote.floor, "vote.floor");
    positive(vote.cubic_factor, "vote.cubic_factor");
  }
};

namespace detail {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_path(const nlohmann::json& j, const char* key, std::filesystem::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

inline nlohmann::json model_json(const ModelConfig& m) {
  return {{"train", to_json(m.train)}, {"topology", to_json(m.topology)}, {"checkpoint", m.checkpoint.string()}};
}

inline void read_model(const nlohmann::json& j, ModelConfig& m) {
  if (j.contains("train")) m.train = train_config_from_json(j.at("train"), m.train);
  if (j.contains("topology")) m.topology = unet_config_from_json(j.at("topology"), m.topology);
  read_path(j, "checkpoint", m.checkpoint);
}

}  // namespace detail

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {
      {"train_dir", c.train_dir.string()},
      {"test_dir", c.test_dir.string()},
      {"output_dir", c.output_dir.string()},
      {"seed", c.seed},
      {"annotation", {{"frame", std::string(to_string(c.annotation.frame))}, {"suffix", c.annotation_suffix}}},
      {"radii", c.radii_override},
      {"sampler",
       {{"detection_per_scan", c.detection_per_scan},
        {"identification_per_scan", c.identification_per_scan},
        {"detection_patch", c.sampler.detection_patch},
        {"identification_patch", c.sampler.identification_patch},
        {"identification_label_slice", c.sampler.identification_label_slice},
        {"positive_fraction", c.sampler.positive_fraction},
        {"max_attempts", c.sampler.max_attempts},
        {"window", {c.sampler.window_low, c.sampler.window_high}}}},
      {"elastic", {{"sigma", c.elastic.sigma}, {"grid", c.elastic.grid}}},
      {"detection", detail::model_json(c.detection)},
      {"identification", detail::model_json(c.identification)},
      {"validation_fraction", c.validation_fraction},
      {"tiling", {{"patch", c.tiling.patch}, {"step", c.tiling.step}, {"pad", c.tiling.pad}}},
      {"slab", {{"slices", c.slab.slices}, {"target_slice", c.slab.target_slice}, {"multiple", c.slab.multiple}}},
      {"vote", {{"floor", c.vote.floor}, {"cubic_factor", c.vote.cubic_factor}}},
      {"stub",
       {{"detection_threshold_hu", c.stub.detection_threshold_hu},
        {"label_offset_hu", c.stub.label_offset_hu},
        {"label_step_hu", c.stub.label_step_hu}}},
      {"save_maps", c.save_maps},
  };
}

// Unknown keys are ignored; missing keys keep their defaults. Relative
// paths are resolved against `base`.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  PipelineConfig c;
  try {
    detail::read_path(j, "train_dir", c.train_dir);
    detail::read_path(j, "test_dir", c.test_dir);
    detail::read_path(j, "output_dir", c.output_dir);
    detail::read_if(j, "seed", c.seed);
    if (j.contains("annotation")) {
      const auto& a = j.at("annotation");
      if (a.contains("frame")) c.annotation.frame = parse_annotation_frame(a.at("frame").get<std::string>());
      detail::read_if(a, "suffix", c.annotation_suffix);
    }
    if (j.contains("radii")) c.radii_override = j.at("radii");
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      detail::read_if(s, "detection_per_scan", c.detection_per_scan);
      detail::read_if(s, "identification_per_scan", c.identification_per_scan);
      detail::read_if(s, "detection_patch", c.sampler.detection_patch);
      detail::read_if(s, "identification_patch", c.sampler.identification_patch);
      detail::read_if(s, "identification_label_slice", c.sampler.identification_label_slice);
      detail::read_if(s, "positive_fraction", c.sampler.positive_fraction);
      detail::read_if(s, "max_attempts", c.sampler.max_attempts);
      if (s.contains("window")) {
        const auto w = s.at("window").get<std::array<float, 2>>();
        c.sampler.window_low = w[0];
        c.sampler.window_high = w[1];
      }
    }
    if (j.contains("elastic")) {
      detail::read_if(j.at("elastic"), "sigma", c.elastic.sigma);
      detail::read_if(j.at("elastic"), "grid", c.elastic.grid);
    }
    if (j.contains("detection")) detail::read_model(j.at("detection"), c.detection);
    if (j.contains("identification")) detail::read_model(j.at("identification"), c.identification);
    detail::read_if(j, "validation_fraction", c.validation_fraction);
    if (j.contains("tiling")) {
      detail::read_if(j.at("tiling"), "patch", c.tiling.patch);
      detail::read_if(j.at("tiling"), "step", c.tiling.step);
      detail::read_if(j.at("tiling"), "pad", c.tiling.pad);
    }
    if (j.contains("slab")) {
      detail::read_if(j.at("slab"), "slices", c.slab.slices);
      detail::read_if(j.at("slab"), "target_slice", c.slab.target_slice);
      detail::read_if(j.at("slab"), "multiple", c.slab.multiple);
    }
    if (j.contains("vote")) {
      detail::read_if(j.at("vote"), "floor", c.vote.floor);
      detail::read_if(j.at("vote"), "cubic_factor", c.vote.cubic_factor);
    }
    if (j.contains("stub")) {
      detail::read_if(j.at("stub"), "detection_threshold_hu", c.stub.detection_threshold_hu);
      detail::read_if(j.at("stub"), "label_offset_hu", c.stub.label_offset_hu);
      detail::read_if(j.at("stub"), "label_step_hu", c.stub.label_step_hu);
    }
    detail::read_if(j, "save_maps", c.save_maps);
  } catch (const nlohmann::json::exception& e) {
    raise<InvalidArgument>("config: ", e.what());
  }
  if (!base.empty()) {
    for (auto* p : {&c.train_dir, &c.test_dir, &c.output_dir, &c.detection.checkpoint, &c.identification.checkpoint}) {
      if (!p->empty() && p->is_relative()) *p = base / *p;
    }
  }
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_json(read_json(path), path.parent_path());
}

}  // namespace spineloc
