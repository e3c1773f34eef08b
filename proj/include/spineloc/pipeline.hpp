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


// The end-to-end workflow behind the command-line tool. Each command
// reads and writes plain files under the configured output directory:
//
//   labels/       resampled scans, dense label maps, centroids, manifest
//   patches/      training patches per model, with a manifest each
//   models/       checkpoints and JSON-lines training logs
//   predictions/  one result per scan, optional intermediate maps
//   evaluation/   report (JSON and table), per-scan scores, box plot
//
// Commands return 0 on success, 1 when some items failed and 2 on fatal
// errors (thrown as spineloc::Error and mapped by the caller).

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spineloc/aggregate.hpp"
#include "spineloc/checkpoint.hpp"
#include "spineloc/config.hpp"
#include "spineloc/dense_label.hpp"
#include "spineloc/elastic.hpp"
#include "spineloc/evaluate.hpp"
#include "spineloc/inference.hpp"
#include "spineloc/log.hpp"
#include "spineloc/nifti.hpp"
#include "spineloc/plot.hpp"
#include "spineloc/predictors.hpp"
#include "spineloc/sampler.hpp"
#include "spineloc/stubs.hpp"
#include "spineloc/synthetic.hpp"
#include "spineloc/training.hpp"
#include "spineloc/version.hpp"
#include "spineloc/volume_io.hpp"

namespace spineloc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitFatal = 2;

struct ScanFile {
  std::string id;
  fs::path image;
  fs::path annotation;
};

inline std::optional<std::string> scan_id(const fs::path& p) {
  const std::string name = p.filename().string();
  for (const std::string suffix : {".nii.gz", ".nii"}) {
    if (name.size() > suffix.size() && name.ends_with(suffix)) return name.substr(0, name.size() - suffix.size());
  }
  return std::nullopt;
}

// Scans in `dir`, sorted by id; the annotation of "x.nii.gz" is
// "x<suffix>" next to it.
inline std::vector<ScanFile> list_scans(const fs::path& dir, const std::string& suffix) {
  if (dir.empty()) raise<InvalidArgument>("no dataset directory configured");
  if (!fs::is_directory(dir)) raise<IoError>("dataset directory '", dir.string(), "' does not exist");
  std::vector<ScanFile> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto id = scan_id(entry.path())) out.push_back({*id, entry.path(), dir / (*id + suffix)});
  }
  std::sort(out.begin(), out.end(), [](const ScanFile& a, const ScanFile& b) { return a.id < b.id; });
  return out;
}

// Annotation convention with the source spacing taken from the scan.
inline AnnotationConvention convention_for(const PipelineConfig& cfg, const Geometry& original) {
  AnnotationConvention c = cfg.annotation;
  c.source_spacing = original.spacing;
  return c;
}

inline nlohmann::json index_json(const Index3& e) { return nlohmann::json::array({e[0], e[1], e[2]}); }

// ---------------------------------------------------------------- labels

inline fs::path labels_dir(const PipelineConfig& cfg) { return cfg.output_dir / "labels"; }

inline int cmd_make_labels(const PipelineConfig& cfg) {
  cfg.validate();
  const auto scans = list_scans(cfg.train_dir, cfg.annotation_suffix);
  if (scans.empty()) raise<IoError>("no scans found in '", cfg.train_dir.string(), "'");
  const RadiiTable radii = cfg.radii();
  const fs::path dir = labels_dir(cfg);
  fs::create_directories(dir);

  nlohmann::json done = nlohmann::json::array();
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& scan : scans) {
    try {
      if (!fs::exists(scan.annotation)) raise<IoError>("missing annotation '", scan.annotation.string(), "'");
      const Volume original = load_volume(scan.image);
      const Volume v = resample_isotropic(original);
      const CentroidLoad load = load_centroids(scan.annotation, v, convention_for(cfg, original.geometry));
      if (load.centroids.empty()) raise<IoError>("empty annotation '", scan.annotation.string(), "'");
      for (const auto& w : load.warnings) log::warn(scan.id, ": ", w);
      const DenseLabelMap d = make_dense_labels(load.centroids, radii, v);

      const std::string ct = scan.id + "_ct.nii.gz";
      const std::string labels = scan.id + "_labels.nii.gz";
      const std::string centroids = scan.id + "_centroids.txt";
      save_image(dir / ct, v, "ct", {{"source", scan.image.filename().string()}});
      save_image(dir / labels, d, "dense_labels", {{"source", scan.image.filename().string()}});
      save_centroids(dir / centroids, load.centroids);
      done.push_back({{"id", scan.id},
                      {"volume", ct},
                      {"labels", labels},
                      {"centroids", centroids},
                      {"extent", index_json(v.extent())},
                      {"vertebrae", load.centroids.size()},
                      {"warnings", load.warnings}});
      log::info(scan.id, ": ", load.centroids.size(), " vertebrae, extent ", v.extent());
    } catch (const Error& e) {
      log::error(scan.id, ": skipped: ", e.what());
      failed.push_back({{"id", scan.id}, {"error", e.what()}});
    }
  }
  write_json(dir / "manifest.json", {{"version", kVersionTag},
                                     {"radii", radii.to_json()},
                                     {"annotation_frame", std::string(to_string(cfg.annotation.frame))},
                                     {"scans", done},
                                     {"failures", failed}});
  if (done.empty()) raise<Error>("no scan produced dense labels");
  return failed.empty() ? kExitOk : kExitPartial;
}

// --------------------------------------------------------------- patches

inline fs::path patches_dir(const PipelineConfig& cfg, PatchKind kind) {
  return cfg.output_dir / "patches" / std::string(to_string(kind));
}

template <typename T>
void write_array(const fs::path& path, const Array3<T>& a) {
  nifti::write(path, Image3<T>{a, Geometry{}});
}

inline int cmd_sample(const PipelineConfig& cfg) {
  cfg.validate();
  const fs::path ldir = labels_dir(cfg);
  const auto manifest = read_json(ldir / "manifest.json");
  const auto& scans = manifest.at("scans");
  if (scans.empty()) raise<Error>("label manifest lists no scans");

  struct Out {
    PatchKind kind;
    fs::path dir;
    nlohmann::json entries = nlohmann::json::array();
    nlohmann::json seeds = nlohmann::json::object();
  };
  Out outs[2] = {{PatchKind::kDetection, patches_dir(cfg, PatchKind::kDetection)},
                 {PatchKind::kIdentification, patches_dir(cfg, PatchKind::kIdentification)}};
  for (auto& o : outs) fs::create_directories(o.dir);

  int failures = 0;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const std::string id = scans[i].at("id").get<std::string>();
    try {
      const Volume v = load_volume(ldir / scans[i].at("volume").get<std::string>());
      const DenseLabelMap d = load_label_map(ldir / scans[i].at("labels").get<std::string>());
      for (auto& o : outs) {
        const bool det = o.kind == PatchKind::kDetection;
        const std::uint64_t seed = derive_seed(cfg.seed, det ? "sample-detection" : "sample-identification", i);
        o.seeds[id] = seed;
        std::vector<Patch> patches =
            det ? sample_detection_patches(v, binarize(d), cfg.detection_per_scan, seed, cfg.sampler)
                : sample_identification_patches(v, d, cfg.identification_per_scan, seed, cfg.sampler);
        for (std::size_t n = 0; n < patches.size(); ++n) {
          Patch& p = patches[n];
          if (!det) p = elastic_deform(p, cfg.elastic.sigma, p.seed, cfg.elastic.grid);
          check_patch_shape(p, cfg.sampler);
          const std::string stem = id + "_" + std::to_string(n);
          write_array(o.dir / (stem + "_image.nii.gz"), p.image);
          write_array(o.dir / (stem + "_label.nii.gz"), p.label);
          o.entries.push_back({{"scan", id},
                               {"index", n},
                               {"offset", index_json(p.offset)},
                               {"pad_before", index_json(p.pad_before)},
                               {"seed", p.seed},
                               {"image", stem + "_image.nii.gz"},
                               {"label", stem + "_label.nii.gz"}});
        }
      }
      log::info(id, ": ", cfg.detection_per_scan, " detection and ", cfg.identification_per_scan,
                " identification patches");
    } catch (const Error& e) {
      log::error(id, ": sampling failed: ", e.what());
      ++failures;
    }
  }
  for (auto& o : outs) {
    const bool det = o.kind == PatchKind::kDetection;
    write_json(o.dir / "manifest.json",
               {{"version", kVersionTag},
                {"kind", std::string(to_string(o.kind))},
                {"root_seed", cfg.seed},
                {"stage_seeds", o.seeds},
                {"patch", index_json(det ? cfg.sampler.detection_patch : cfg.sampler.identification_patch)},
                {"elastic", det ? nlohmann::json(nullptr)
                                : nlohmann::json{{"sigma", cfg.elastic.sigma}, {"grid", cfg.elastic.grid}}},
                {"patches", o.entries}});
  }
  if (failures == static_cast<int>(scans.size())) raise<Error>("sampling failed for every scan");
  return failures == 0 ? kExitOk : kExitPartial;
}

struct PatchSet {
  std::vector<Patch> train;
  std::vector<Patch> validation;
  std::vector<std::string> validation_scans;
};

// Loads a patch directory and holds out whole scans for validation.
inline PatchSet load_patch_set(const fs::path& dir, double validation_fraction, std::uint64_t seed) {
  const auto manifest = read_json(dir / "manifest.json");
  const PatchKind kind =
      manifest.at("kind").get<std::string>() == "detection" ? PatchKind::kDetection : PatchKind::kIdentification;
  std::vector<std::string> ids;
  for (const auto& e : manifest.at("patches")) ids.push_back(e.at("scan").get<std::string>());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) raise<Error>("patch manifest in '", dir.string(), "' lists no patches");

  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(i)))]);
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(ids.size())));
  PatchSet set;
  set.validation_scans.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(set.validation_scans.begin(), set.validation_scans.end());

  for (const auto& e : manifest.at("patches")) {
    Patch p;
    p.kind = kind;
    p.image = load_volume(dir / e.at("image").get<std::string>()).data;
    p.label = load_label_map(dir / e.at("label").get<std::string>()).data;
    p.seed = e.at("seed").get<std::uint64_t>();
    const auto scan = e.at("scan").get<std::string>();
    const bool val = std::binary_search(set.validation_scans.begin(), set.validation_scans.end(), scan);
    (val ? set.validation : set.train).push_back(std::move(p));
  }
  return set;
}

// ----------------------------------------------------------------- train

struct TrainOptions {
  std::string model = "detection";  // or "identification"
  fs::path patches;                 // empty: the model's own patch directory
  bool resume = false;
};

template <typename Net>
int run_training(const PipelineConfig& cfg, const ModelConfig& mc, const TrainOptions& opt, const Index3& extent) {
  const fs::path dir = opt.patches.empty()
                           ? patches_dir(cfg, opt.model == "detection" ? PatchKind::kDetection : PatchKind::kIdentification)
                           : opt.patches;
  const std::uint64_t seed = derive_seed(cfg.seed, "train-" + opt.model);
  const PatchSet set = load_patch_set(dir, cfg.validation_fraction, seed);
  if (set.train.empty()) raise<Error>("no training patches left after the validation split");
  log::info(opt.model, ": ", set.train.size(), " training and ", set.validation.size(), " validation patches");

  const fs::path ckpt = cfg.checkpoint_path(opt.model);
  const fs::path log_path = ckpt.parent_path() / (opt.model + "_log.jsonl");
  const torch::Device device = device_from_env();
  TrainConfig tc = mc.train;
  tc.seed = seed;

  std::optional<Trainer<Net>> trainer;
  if (opt.resume) {
    auto loaded = load_checkpoint<Net>(ckpt);
    trainer.emplace(loaded.net, tc, extent, device);
    if (loaded.has_optimizer_state) trainer->optimizer().load(loaded.optimizer_state);
    trainer->set_epochs_completed(loaded.meta.epochs_completed);
    log::info(opt.model, ": resuming after epoch ", loaded.meta.epochs_completed);
  } else {
    torch::manual_seed(seed);
    UNetConfig topology = mc.topology;
    topology.bn_momentum = tc.bn_momentum;
    trainer.emplace(Net(topology), tc, extent, device);
    fs::create_directories(ckpt.parent_path());
    std::ofstream(log_path, std::ios::trunc);
  }

  const std::int64_t remaining = std::max<std::int64_t>(0, tc.epochs - trainer->epochs_completed());
  std::ofstream log(log_path, std::ios::app);
  trainer->run(set.train, remaining, set.validation.empty() ? nullptr : &set.validation, [&](const EpochRecord& r) {
    log << to_json(r).dump() << '\n' << std::flush;
    save_checkpoint(ckpt, *trainer, extent);
    log::info(opt.model, " epoch ", r.epoch, ": loss ", r.loss, " metric ", r.metric);
  });
  if (remaining == 0) save_checkpoint(ckpt, *trainer, extent);
  log::info(opt.model, ": checkpoint '", ckpt.string(), "'");
  return kExitOk;
}

inline int cmd_train(const PipelineConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (opt.model == "detection") return run_training<DetectionNet>(cfg, cfg.detection, opt, cfg.sampler.detection_patch);
  if (opt.model == "identification") {
    return run_training<IdentificationNet>(cfg, cfg.identification, opt, cfg.sampler.identification_patch);
  }
  raise<InvalidArgument>("unknown model '", opt.model, "' (expected detection or identification)");
}

// --------------------------------------------------------------- predict

struct PredictOptions {
  std::optional<fs::path> scan;  // single scan; otherwise every scan in test_dir
  bool stub = false;
};

inline fs::path predictions_dir(const PipelineConfig& cfg) { return cfg.output_dir / "predictions"; }

template <typename Det, typename Id>
PredictionResult predict_volume(Det&& det, Id&& id, const Volume& v, const PipelineConfig& cfg, RealMap* id_map = nullptr,
                                DenseLabelMap* det_map = nullptr) {
  DenseLabelMap detection = detect_volume(det, v, cfg.tiling, cfg.sampler);
  RealMap identification = identify_volume(id, v, cfg.slab, cfg.sampler);
  PredictionResult r = aggregate_centroids(fuse(detection, identification), cfg.radii(), cfg.vote);
  if (id_map != nullptr) *id_map = std::move(identification);
  if (det_map != nullptr) *det_map = std::move(detection);
  return r;
}

inline nlohmann::json prediction_json(const std::string& id, const PredictionResult& r, const Volume& v) {
  nlohmann::json j = to_json(r);
  j["scan"] = id;
  j["frame"] = "relative_mm";
  j["geometry"] = geometry_json(v.extent(), v.geometry);
  j["version"] = kVersionTag;
  return j;
}

template <typename Det, typename Id>
int predict_scans(Det&& det, Id&& id, const PipelineConfig& cfg, const std::vector<ScanFile>& scans) {
  const fs::path dir = predictions_dir(cfg);
  fs::create_directories(dir);
  int failures = 0;
  std::vector<ScanScore> scores;
  for (const auto& scan : scans) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const Volume original = load_volume(scan.image);
      const Volume v = resample_isotropic(original);
      RealMap id_map;
      DenseLabelMap det_map;
      const PredictionResult r = predict_volume(det, id, v, cfg, &id_map, &det_map);
      write_json(dir / (scan.id + ".json"), prediction_json(scan.id, r, v));
      if (cfg.save_maps) {
        save_image(dir / (scan.id + "_detection.nii.gz"), det_map, "detection");
        save_image(dir / (scan.id + "_identification.nii.gz"), id_map, "identification");
        save_image(dir / (scan.id + "_fused.nii.gz"), r.fused, "fused");
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log::info(scan.id, ": ", r.centroids.size(), " vertebrae accepted in ", seconds, "s");
      if (fs::exists(scan.annotation)) {
        const auto truth = load_centroids(scan.annotation, v, convention_for(cfg, original.geometry));
        scores.push_back(score_scan(r.centroids, truth.centroids, scan.id));
      }
    } catch (const Error& e) {
      log::error(scan.id, ": prediction failed: ", e.what());
      ++failures;
    }
  }
  if (scans.size() > 1 && !scores.empty()) {
    const RegionReport report = build_report(scores);
    write_json(dir / "report.json", to_json(report));
    std::ofstream(dir / "report.txt") << format_report_table(report);
  }
  if (failures == static_cast<int>(scans.size())) raise<Error>("prediction failed for every scan");
  return failures == 0 ? kExitOk : kExitPartial;
}

inline int cmd_predict(const PipelineConfig& cfg, const PredictOptions& opt) {
  cfg.validate();
  std::vector<ScanFile> scans;
  if (opt.scan) {
    const auto id = scan_id(*opt.scan);
    if (!id) raise<InvalidArgument>("'", opt.scan->string(), "' is not a .nii or .nii.gz file");
    scans.push_back({*id, *opt.scan, opt.scan->parent_path() / (*id + cfg.annotation_suffix)});
  } else {
    scans = list_scans(cfg.test_dir, cfg.annotation_suffix);
    if (scans.empty()) raise<IoError>("no scans found in '", cfg.test_dir.string(), "'");
  }
  if (opt.stub) {
    return predict_scans(ThresholdDetectionStub{cfg.stub, cfg.sampler},
                         IntensityIdentificationStub{cfg.stub, cfg.sampler, cfg.slab.target_slice}, cfg, scans);
  }
  auto det = load_checkpoint<DetectionNet>(cfg.checkpoint_path("detection"));
  auto id = load_checkpoint<IdentificationNet>(cfg.checkpoint_path("identification"));
  const torch::Device device = device_from_env();
  return predict_scans(detection_predictor(det.net, device), identification_predictor(id.net, device), cfg, scans);
}

// -------------------------------------------------------------- evaluate

inline fs::path evaluation_dir(const PipelineConfig& cfg) { return cfg.output_dir / "evaluation"; }

inline int cmd_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  const fs::path pdir = predictions_dir(cfg);
  const auto scans = list_scans(cfg.test_dir, cfg.annotation_suffix);
  std::vector<ScanScore> scores;
  int missing = 0;
  for (const auto& scan : scans) {
    const fs::path pred_path = pdir / (scan.id + ".json");
    if (!fs::exists(pred_path) || !fs::exists(scan.annotation)) {
      log::warn(scan.id, ": no ", fs::exists(pred_path) ? "ground truth" : "prediction", " to compare");
      ++missing;
      continue;
    }
    const Volume original = load_volume(scan.image);
    const Image3<std::uint8_t> frame{Array3<std::uint8_t>(resampled_extent(original.extent(), original.geometry)),
                                     Geometry{{1, 1, 1}, original.geometry.origin}};
    const auto truth = load_centroids(scan.annotation, frame, convention_for(cfg, original.geometry));
    const auto pred = centroids_from_json(read_json(pred_path));
    scores.push_back(score_scan(pred, truth.centroids, scan.id));
  }
  if (scores.empty()) raise<Error>("no scan has both a prediction and ground truth");

  const RegionReport report = build_report(scores);
  const fs::path dir = evaluation_dir(cfg);
  write_json(dir / "report.json", to_json(report));
  std::ofstream(dir / "report.txt") << format_report_table(report);
  nlohmann::json per_scan = nlohmann::json::array();
  for (const auto& s : scores) {
    nlohmann::json errors = nlohmann::json::object();
    for (const auto& [label, e] : s.errors) errors[std::string(vertebra_name(label))] = e;
    nlohmann::json identified = nlohmann::json::object();
    for (const auto& [label, ok] : s.identified) identified[std::string(vertebra_name(label))] = ok;
    per_scan.push_back({{"scan", s.scan_id},
                        {"errors", errors},
                        {"identified", identified},
                        {"mean_error", detail::opt(s.mean_error)}});
  }
  write_json(dir / "scores.json", per_scan);
  std::cout << format_report_table(report);
  if (!report.per_vertebra.empty()) {
    for (const auto& n : plot_per_vertebra(report, dir / "per_vertebra.png").notices) log::info("plot: ", n);
  }
  return missing == 0 ? kExitOk : kExitPartial;
}

inline int cmd_plot(const fs::path& report_path, const fs::path& image_path) {
  const RegionReport report = report_from_json(read_json(report_path));
  for (const auto& n : plot_per_vertebra(report, image_path).notices) log::info("plot: ", n);
  return kExitOk;
}

// ----------------------------------------------------------------- synth

struct SynthOptions {
  fs::path dir;
  int train = 2;
  int test = 2;
  Index3 extent{100, 100, 170};
  int count = 5;
  double step_mm = 28.0;
  std::uint64_t seed = 0;
};

// Synthetic dataset (train/ and test/ with annotations) readable by the
// stub predictors.
inline int cmd_synth(const SynthOptions& opt, const PipelineConfig& cfg = {}) {
  const RadiiTable radii = cfg.radii();
  Rng rng(derive_seed(opt.seed, "synth"));
  for (const auto& [split, n] : {std::pair<std::string, int>{"train", opt.train}, {"test", opt.test}}) {
    fs::create_directories(opt.dir / split);
    for (int i = 0; i < n; ++i) {
      SpineSpec spec;
      spec.extent = opt.extent;
      spec.count = opt.count;
      spec.step_mm = opt.step_mm;
      spec.first_label = 1 + static_cast<int>(rng.index(kLastVertebra - opt.count + 1));
      spec.seed = rng.next();
      const CentroidSet c = synthetic_spine(spec);
      const Volume v = make_synthetic_scan(c, radii, opt.extent, cfg.stub);
      char name[32];
      std::snprintf(name, sizeof(name), "%s%03d", split.c_str(), i);
      nifti::write(opt.dir / split / (std::string(name) + ".nii.gz"), v);
      save_centroids(opt.dir / split / (std::string(name) + cfg.annotation_suffix), c);
    }
  }
  log::info("synthetic dataset in '", opt.dir.string(), "'");
  return kExitOk;
}

}  // namespace spineloc
