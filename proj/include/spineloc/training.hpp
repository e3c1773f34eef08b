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

#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spineloc/error.hpp"
#include "spineloc/nets.hpp"
#include "spineloc/rng.hpp"
#include "spineloc/sampler.hpp"

namespace spineloc {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::int64_t batch_size = 16;
  std::int64_t epochs = 50;
  double bn_momentum = 0.1;
  std::array<double, 2> class_weights{0.1, 0.9};  // background, vertebrae
  std::uint64_t seed = 0;

  static TrainConfig detection() { return {}; }
  static TrainConfig identification() {
    TrainConfig c;
    c.batch_size = 32;
    c.epochs = 35;
    return c;
  }

  // Zero epochs is allowed (returns the initialised weights).
  void validate() const {
    if (!(learning_rate > 0.0)) raise<InvalidArgument>("learning rate must be positive");
    if (batch_size < 1) raise<InvalidArgument>("batch size must be positive");
    if (epochs < 0) raise<InvalidArgument>("epochs must be non-negative");
    if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) raise<InvalidArgument>("batch-norm momentum must lie in (0, 1)");
    if (!(class_weights[0] > 0.0 && class_weights[1] > 0.0)) raise<InvalidArgument>("class weights must be positive");
    if (std::abs(class_weights[0] + class_weights[1] - 1.0) > 1e-9) raise<InvalidArgument>("class weights must sum to 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"bn_momentum", c.bn_momentum},     {"class_weights", c.class_weights}, {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.class_weights = j.value("class_weights", c.class_weights);
  c.seed = j.value("seed", c.seed);
  return c;
}

struct EpochRecord {
  std::int64_t epoch = 0;
  double loss = 0.0;
  double metric = 0.0;  // detection: foreground Dice; identification: masked L1
  std::optional<double> val_loss;
  std::optional<double> val_metric;
};

using TrainLog = std::vector<EpochRecord>;

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"loss", r.loss}, {"metric", r.metric}};
  if (r.val_loss) j["val_loss"] = *r.val_loss;
  if (r.val_metric) j["val_metric"] = *r.val_metric;
  return j;
}

// Compute device from SPINELOC_DEVICE ("cpu" or "cuda"); cpu by default.
inline torch::Device device_from_env() {
  const char* env = std::getenv("SPINELOC_DEVICE");
  const std::string name = env == nullptr ? "cpu" : env;
  if (name.empty() || name == "cpu") return torch::kCPU;
  if (name == "cuda") {
    if (!torch::cuda::is_available()) raise<InvalidArgument>("SPINELOC_DEVICE=cuda but no CUDA device is available");
    return torch::kCUDA;
  }
  raise<InvalidArgument>("unknown SPINELOC_DEVICE '", name, "'");
}

struct Batch {
  torch::Tensor images;
  torch::Tensor labels;
};

// detection: images {B,1,X,Y,Z} float, labels {B,X,Y,Z} long
inline Batch detection_batch(const std::vector<const Patch*>& patches, const Index3& expected) {
  std::vector<torch::Tensor> images, labels;
  for (const Patch* p : patches) {
    if (p->kind != PatchKind::kDetection || p->image.extent() != p->label.extent() || p->image.extent() != expected) {
      raise<ShapeMismatch>("detection batch expects ", expected, " image/label pairs, got ", to_string(p->kind),
                           " patch with image ", p->image.extent(), " and label ", p->label.extent());
    }
    const auto& e = p->image.extent();
    images.push_back(torch::from_blob(const_cast<float*>(p->image.data()), {1, e[0], e[1], e[2]}, torch::kFloat).clone());
    labels.push_back(
        torch::from_blob(const_cast<std::uint8_t*>(p->label.data()), {e[0], e[1], e[2]}, torch::kUInt8).to(torch::kLong));
  }
  return {torch::stack(images), torch::stack(labels)};
}

// identification: images {B,C,H,W} float, labels {B,H,W} float
inline Batch identification_batch(const std::vector<const Patch*>& patches, const Index3& expected) {
  std::vector<torch::Tensor> images, labels;
  const Index3 label_extent{1, expected[1], expected[2]};
  for (const Patch* p : patches) {
    if (p->kind != PatchKind::kIdentification || p->image.extent() != expected || p->label.extent() != label_extent) {
      raise<ShapeMismatch>("identification batch expects ", expected, " images with ", label_extent, " labels, got ",
                           to_string(p->kind), " patch with image ", p->image.extent(), " and label ",
                           p->label.extent());
    }
    const auto& e = p->image.extent();
    images.push_back(torch::from_blob(const_cast<float*>(p->image.data()), {e[0], e[1], e[2]}, torch::kFloat).clone());
    labels.push_back(
        torch::from_blob(const_cast<std::uint8_t*>(p->label.data()), {e[1], e[2]}, torch::kUInt8).to(torch::kFloat));
  }
  return {torch::stack(images), torch::stack(labels)};
}

// Task-specific pieces the generic loop needs.
template <typename Net>
struct TaskTraits;

template <>
struct TaskTraits<DetectionNet> {
  static Batch batch(const std::vector<const Patch*>& p, const Index3& e) { return detection_batch(p, e); }
  static torch::Tensor loss(DetectionNet& net, const Batch& b, const TrainConfig& cfg, torch::Tensor* out_pred) {
    const auto probs = torch::softmax(net->forward(b.images), 1);
    if (out_pred != nullptr) *out_pred = probs.argmax(1);
    return detection_loss(probs, b.labels, cfg.class_weights);
  }
};

template <>
struct TaskTraits<IdentificationNet> {
  static Batch batch(const std::vector<const Patch*>& p, const Index3& e) { return identification_batch(p, e); }
  static torch::Tensor loss(IdentificationNet& net, const Batch& b, const TrainConfig&, torch::Tensor* out_pred) {
    const auto pred = net->forward(b.images).squeeze(1);
    if (out_pred != nullptr) *out_pred = pred;
    return identification_loss(pred, b.labels);
  }
};

// Accumulates the epoch metric across batches.
struct MetricAccumulator {
  bool detection = true;
  double intersection = 0.0, pred_sum = 0.0, target_sum = 0.0;  // Dice
  double abs_error = 0.0, masked = 0.0;                         // masked L1

  void add(const torch::Tensor& pred, const torch::Tensor& target) {
    torch::NoGradGuard guard;
    if (detection) {
      const auto p = (pred != 0).to(torch::kDouble);
      const auto t = (target != 0).to(torch::kDouble);
      intersection += (p * t).sum().item<double>();
      pred_sum += p.sum().item<double>();
      target_sum += t.sum().item<double>();
    } else {
      const auto mask = (target != 0).to(torch::kDouble);
      abs_error += (torch::abs(pred.to(torch::kDouble) - target.to(torch::kDouble)) * mask).sum().item<double>();
      masked += mask.sum().item<double>();
    }
  }

  double value() const {
    if (detection) return pred_sum + target_sum == 0.0 ? 1.0 : 2.0 * intersection / (pred_sum + target_sum);
    return masked == 0.0 ? 0.0 : abs_error / masked;
  }
};

struct Evaluation {
  double loss = 0.0;
  double metric = 0.0;
};

// Owns a network and its optimiser; epochs continue across calls to run().
template <typename Net>
class Trainer {
 public:
  Trainer(Net net, TrainConfig cfg, Index3 patch_extent, torch::Device device = torch::kCPU)
      : net_(std::move(net)),
        cfg_(cfg),
        patch_extent_(patch_extent),
        device_(device),
        optimizer_(net_->parameters(), torch::optim::AdamOptions(cfg.learning_rate)) {
    cfg_.validate();
    net_->to(device_);
  }

  Net& net() { return net_; }
  torch::optim::Adam& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t epochs_completed() const { return epochs_completed_; }
  void set_epochs_completed(std::int64_t n) { epochs_completed_ = n; }

  using EpochCallback = std::function<void(const EpochRecord&)>;

  // Runs `epochs` more epochs over `train`, optionally scoring `val`
  // after each. Throws DivergenceError on a non-finite loss.
  TrainLog run(const std::vector<Patch>& train, std::int64_t epochs, const std::vector<Patch>* val = nullptr,
               const EpochCallback& on_epoch = {}) {
    if (train.empty() && epochs > 0) raise<InvalidArgument>("training needs a nonempty patch set");
    TrainLog log;
    std::vector<std::size_t> order(train.size());
    for (std::int64_t e = 0; e < epochs; ++e) {
      const std::int64_t epoch = epochs_completed_ + 1;
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(cfg_.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(i)))]);
      }

      net_->train();
      MetricAccumulator metric{is_detection()};
      double loss_sum = 0.0;
      std::int64_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
        std::vector<const Patch*> members;
        for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size)); ++i) {
          members.push_back(&train[order[i]]);
        }
        Batch b = TaskTraits<Net>::batch(members, patch_extent_);
        b.images = b.images.to(device_);
        b.labels = b.labels.to(device_);
        optimizer_.zero_grad();
        torch::Tensor pred;
        auto loss = TaskTraits<Net>::loss(net_, b, cfg_, &pred);
        const double value = loss.template item<double>();
        if (!std::isfinite(value)) {
          raise<DivergenceError>("loss became non-finite (", value, ") at epoch ", epoch, ", batch ", batches);
        }
        loss.backward();
        optimizer_.step();
        metric.add(pred, b.labels);
        loss_sum += value;
        ++batches;
      }

      EpochRecord rec{epoch, loss_sum / static_cast<double>(std::max<std::int64_t>(batches, 1)), metric.value(), {}, {}};
      if (val != nullptr && !val->empty()) {
        const Evaluation ev = evaluate(*val);
        rec.val_loss = ev.loss;
        rec.val_metric = ev.metric;
      }
      epochs_completed_ = epoch;
      log.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }
    return log;
  }

  // Loss and metric in inference mode (running batch-norm statistics).
  Evaluation evaluate(const std::vector<Patch>& patches) {
    torch::NoGradGuard guard;
    net_->eval();
    MetricAccumulator metric{is_detection()};
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
      std::vector<const Patch*> members;
      for (std::size_t i = start; i < std::min(patches.size(), start + static_cast<std::size_t>(cfg_.batch_size)); ++i) {
        members.push_back(&patches[i]);
      }
      Batch b = TaskTraits<Net>::batch(members, patch_extent_);
      b.images = b.images.to(device_);
      b.labels = b.labels.to(device_);
      torch::Tensor pred;
      loss_sum += TaskTraits<Net>::loss(net_, b, cfg_, &pred).template item<double>();
      metric.add(pred, b.labels);
      ++batches;
    }
    return {loss_sum / static_cast<double>(std::max<std::int64_t>(batches, 1)), metric.value()};
  }

 private:
  static constexpr bool is_detection() { return std::is_same_v<Net, DetectionNet>; }

  Net net_;
  TrainConfig cfg_;
  Index3 patch_extent_;
  torch::Device device_;
  torch::optim::Adam optimizer_;
  std::int64_t epochs_completed_ = 0;
};

template <typename Net>
struct TrainResult {
  Net net;
  TrainLog log;
};

inline TrainResult<DetectionNet> train_detection(const std::vector<Patch>& patches, const TrainConfig& cfg,
                                                 UNetConfig topology = UNetConfig::detection(),
                                                 const std::vector<Patch>* val = nullptr) {
  cfg.validate();
  if (patches.empty()) raise<InvalidArgument>("training needs a nonempty patch set");
  topology.bn_momentum = cfg.bn_momentum;
  torch::manual_seed(cfg.seed);
  Trainer<DetectionNet> trainer(DetectionNet(topology), cfg, patches.front().image.extent(), device_from_env());
  TrainLog log = trainer.run(patches, cfg.epochs, val);
  return {trainer.net(), std::move(log)};
}

inline TrainResult<IdentificationNet> train_identification(const std::vector<Patch>& patches, const TrainConfig& cfg,
                                                           UNetConfig topology = UNetConfig::identification(),
                                                           const std::vector<Patch>* val = nullptr) {
  cfg.validate();
  if (patches.empty()) raise<InvalidArgument>("training needs a nonempty patch set");
  topology.bn_momentum = cfg.bn_momentum;
  torch::manual_seed(cfg.seed);
  Trainer<IdentificationNet> trainer(IdentificationNet(topology), cfg, patches.front().image.extent(),
                                     device_from_env());
  TrainLog log = trainer.run(patches, cfg.epochs, val);
  return {trainer.net(), std::move(log)};
}

}  // namespace spineloc
