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


#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <random>

#include "spineloc/checkpoint.hpp"
#include "spineloc/inference.hpp"
#include "spineloc/nets.hpp"
#include "spineloc/predictors.hpp"
#include "spineloc/training.hpp"
#include "test_util.hpp"
#include "tiny_data.hpp"

namespace spineloc {
namespace {

torch::Tensor probs_at(double p0, double p1) {
  return torch::tensor({p0, p1}, torch::kDouble).reshape({1, 2, 1, 1, 1});
}

// Scalar reference of the weighted cross entropy.
double reference_detection_loss(const torch::Tensor& probs, const torch::Tensor& target) {
  auto p = probs.contiguous().to(torch::kDouble);
  auto t = target.contiguous().to(torch::kLong);
  const std::int64_t n = t.numel();
  const auto pf = p.reshape({p.size(0), 2, -1});
  const auto tf = t.reshape({t.size(0), -1});
  double sum = 0.0;
  for (std::int64_t b = 0; b < tf.size(0); ++b) {
    for (std::int64_t v = 0; v < tf.size(1); ++v) {
      const int c = static_cast<int>(tf[b][v].item<std::int64_t>());
      const double q = std::max(pf[b][c][v].item<double>(), 1e-7);
      sum += (c == 0 ? 0.1 : 0.9) * std::log(q);
    }
  }
  return -sum / static_cast<double>(n);
}

double reference_identification_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  auto p = pred.contiguous().to(torch::kDouble).reshape({-1});
  auto t = target.contiguous().to(torch::kDouble).reshape({-1});
  double sum = 0.0;
  int count = 0;
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    const double tv = t[i].item<double>();
    if (tv == 0.0) continue;
    sum += std::abs(p[i].item<double>() - tv);
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

TEST(DetectionLoss, HandValues) {
  const auto perfect = torch::zeros({2, 2, 3, 3, 3}, torch::kDouble);
  perfect.select(1, 0).fill_(1.0);
  EXPECT_NEAR(detection_loss(perfect, torch::zeros({2, 3, 3, 3}, torch::kLong)).item<double>(), 0.0, 1e-12);

  const double pos = detection_loss(probs_at(0.5, 0.5), torch::ones({1, 1, 1, 1}, torch::kLong)).item<double>();
  const double neg = detection_loss(probs_at(0.5, 0.5), torch::zeros({1, 1, 1, 1}, torch::kLong)).item<double>();
  EXPECT_NEAR(pos, 0.6238324625, 1e-6);
  EXPECT_NEAR(neg, 0.0693147181, 1e-6);
  EXPECT_NEAR(pos / neg, 9.0, 1e-9);
}

TEST(DetectionLoss, Errors) {
  EXPECT_THROW(detection_loss(probs_at(0.5, 0.5), torch::ones({1, 2, 1, 1}, torch::kLong)), ShapeMismatch);
  EXPECT_THROW(detection_loss(probs_at(-0.5, 1.5), torch::ones({1, 1, 1, 1}, torch::kLong)), InvalidArgument);
  EXPECT_THROW(detection_loss(probs_at(0.5, 0.5), torch::full({1, 1, 1, 1}, 2, torch::kLong)), InvalidArgument);
}

TEST(DetectionLoss, ZeroProbabilityIsClamped) {
  const double v = detection_loss(probs_at(1.0, 0.0), torch::ones({1, 1, 1, 1}, torch::kLong)).item<double>();
  EXPECT_NEAR(v, -0.9 * std::log(1e-7), 1e-9);
}

TEST(IdentificationLoss, HandValues) {
  const auto t = torch::tensor({4.0, 0.0}, torch::kDouble);
  EXPECT_NEAR(identification_loss(torch::tensor({4.5, 7.0}, torch::kDouble), t).item<double>(), 0.5, 1e-12);
  EXPECT_EQ(identification_loss(t, t).item<double>(), 0.0);
  const auto zeros = torch::zeros({3, 5}, torch::kDouble);
  EXPECT_EQ(identification_loss(torch::randn({3, 5}, torch::kDouble), zeros).item<double>(), 0.0);
  EXPECT_THROW(identification_loss(torch::zeros({2, 3}), torch::zeros({3, 2})), ShapeMismatch);
}

TEST(IdentificationLoss, GradientAboveTargetIsOneOverCount) {
  auto pred = torch::tensor({5.5, 2.0, 9.0, 1.0}, torch::kDouble).requires_grad_();
  const auto target = torch::tensor({5.0, 0.0, 10.0, 0.0}, torch::kDouble);
  identification_loss(pred, target).backward();
  const auto g = pred.grad();
  EXPECT_NEAR(g[0].item<double>(), 0.5, 1e-12);
  EXPECT_EQ(g[1].item<double>(), 0.0);
  EXPECT_NEAR(g[2].item<double>(), -0.5, 1e-12);
  EXPECT_EQ(g[3].item<double>(), 0.0);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

TEST(LossProperty, DetectionMatchesReferenceAndFiniteDifferences) {
  torch::manual_seed(3);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> ext(1, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<std::int64_t> shape{ext(rng), 2, ext(rng), ext(rng), ext(rng)};
    auto logits = torch::randn(shape, torch::kDouble).requires_grad_();
    const auto target = torch::randint(0, 2, {shape[0], shape[2], shape[3], shape[4]}, torch::kLong);
    auto loss = detection_loss(torch::softmax(logits, 1), target);
    EXPECT_NEAR(loss.item<double>(), reference_detection_loss(torch::softmax(logits, 1).detach(), target), 1e-6);
    loss.backward();
    const auto grad = logits.grad().reshape({-1});
    auto flat = logits.detach().clone().reshape({-1});
    const double eps = 1e-6;
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
      auto plus = flat.clone();
      auto minus = flat.clone();
      plus[i] += eps;
      minus[i] -= eps;
      const double fp = detection_loss(torch::softmax(plus.reshape(shape), 1), target).item<double>();
      const double fm = detection_loss(torch::softmax(minus.reshape(shape), 1), target).item<double>();
      const double fd = (fp - fm) / (2 * eps);
      ASSERT_LT(relative_error(fd, grad[i].item<double>()), 1e-4) << "trial " << trial << " index " << i;
    }
  }
}

TEST(LossProperty, IdentificationMatchesReferenceAndFiniteDifferences) {
  torch::manual_seed(4);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> ext(1, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<std::int64_t> shape{ext(rng), ext(rng), ext(rng)};
    const auto target = torch::randint(0, 6, shape, torch::kLong).to(torch::kDouble);
    // keep every prediction at least 0.05 away from the |.| kink
    auto offset = torch::rand(shape, torch::kDouble) * 0.9 + 0.05;
    auto sign = torch::randint(0, 2, shape, torch::kDouble) * 2 - 1;
    auto pred = (target + sign * offset).requires_grad_();
    auto loss = identification_loss(pred, target);
    EXPECT_NEAR(loss.item<double>(), reference_identification_loss(pred.detach(), target), 1e-12);
    loss.backward();
    const auto grad = pred.grad().reshape({-1});
    auto flat = pred.detach().clone().reshape({-1});
    const double eps = 1e-6;
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
      auto plus = flat.clone();
      auto minus = flat.clone();
      plus[i] += eps;
      minus[i] -= eps;
      const double fd = (identification_loss(plus.reshape(shape), target).item<double>() -
                         identification_loss(minus.reshape(shape), target).item<double>()) /
                        (2 * eps);
      const double g = grad[i].item<double>();
      if (g == 0.0) {
        ASSERT_EQ(fd, 0.0);
      } else {
        ASSERT_LT(relative_error(fd, g), 1e-4) << "trial " << trial << " index " << i;
      }
    }
  }
}

TEST(Nets, ForwardShapes) {
  torch::NoGradGuard guard;
  DetectionNet det(tiny::detection_topology());
  det->eval();
  const auto p = det->probabilities(torch::randn({2, 1, 16, 16, 24}));
  EXPECT_EQ(p.sizes(), (std::vector<std::int64_t>{2, 2, 16, 16, 24}));
  EXPECT_TRUE(torch::allclose(p.sum(1), torch::ones({2, 16, 16, 24}), 1e-5, 1e-5));

  IdentificationNet id(tiny::identification_topology());
  id->eval();
  EXPECT_EQ(id->forward(torch::randn({1, 8, 16, 48})).sizes(), (std::vector<std::int64_t>{1, 1, 16, 48}));
  EXPECT_THROW(id->forward(torch::randn({1, 7, 16, 48})), ShapeMismatch);
  EXPECT_THROW(id->forward(torch::randn({1, 8, 12, 48})), ShapeMismatch);
}

TEST(Nets, DefaultTopologies) {
  const auto d = UNetConfig::detection();
  EXPECT_EQ(d.channels, (std::vector<std::int64_t>{16, 32, 64, 128}));
  EXPECT_EQ(d.size_multiple(), 8);
  const auto i = UNetConfig::identification();
  EXPECT_EQ(i.in_channels, 8);
  EXPECT_EQ(i.bottom_kernel, (std::vector<std::int64_t>{5, 20}));
  EXPECT_EQ(80 % i.size_multiple(), 0);
  EXPECT_EQ(320 % i.size_multiple(), 0);
  EXPECT_EQ(receptive_field(i, 1), 368);
  EXPECT_GE(receptive_field(i, 1), 200);
  EXPECT_EQ(receptive_field(i, 0), 128);
  EXPECT_EQ(unet_config_from_json(to_json(i), UNetConfig::detection()), i);
}

TEST(Nets, FullSizeIdentificationAcceptsTrainingSlab) {
  torch::NoGradGuard guard;
  IdentificationNet id;
  id->eval();
  EXPECT_EQ(id->forward(torch::zeros({1, 8, 80, 320})).sizes(), (std::vector<std::int64_t>{1, 1, 80, 320}));
}

TEST(Nets, MomentumFollowsRetentionConvention) {
  DetectionNet det(tiny::detection_topology());
  int seen = 0;
  for (const auto& m : det->modules(false)) {
    if (auto* bn = m->as<torch::nn::BatchNorm3dImpl>()) {
      EXPECT_NEAR(*bn->options.momentum(), 0.9, 1e-12);
      ++seen;
    }
  }
  EXPECT_EQ(seen, 14);
}

TEST(Training, ZeroEpochsReturnsInitialWeights) {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 17;
  const auto result = train_detection(tiny::detection_pair(), cfg, tiny::detection_topology());
  EXPECT_TRUE(result.log.empty());
  torch::manual_seed(17);
  DetectionNet fresh(tiny::detection_topology());
  const auto a = result.net->parameters();
  const auto b = fresh->parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(torch::equal(a[i], b[i]));

  const auto id = train_identification(tiny::identification_pair(), cfg, tiny::identification_topology());
  EXPECT_TRUE(id.log.empty());
}

TEST(Training, WrongPatchKindFailsAtFirstBatch) {
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_detection(tiny::identification_pair(), cfg, tiny::detection_topology()), ShapeMismatch);
  EXPECT_THROW(train_identification(tiny::detection_pair(), cfg, tiny::identification_topology()), ShapeMismatch);
}

TEST(Training, NonFiniteLossIsDivergence) {
  TrainConfig cfg;
  cfg.epochs = 1;
  auto patches = tiny::identification_pair();
  patches[0].image(0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train_identification(patches, cfg, tiny::identification_topology()), DivergenceError);
}

TEST(Training, ConfigValidation) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.class_weights = {0.2, 0.9};
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(TrainConfig::identification().batch_size, 32);
  EXPECT_EQ(TrainConfig::identification().epochs, 35);
  EXPECT_EQ(TrainConfig::detection().epochs, 50);
}

TEST(Checkpoint, RoundTripAndResume) {
  TempDir dir;
  const auto patches = tiny::detection_pair();
  TrainConfig cfg;
  cfg.batch_size = 2;
  torch::manual_seed(0);
  Trainer<DetectionNet> trainer(DetectionNet(tiny::detection_topology()), cfg, {16, 16, 16});
  trainer.run(patches, 2);
  const auto path = dir.path() / "det.pt";
  save_checkpoint(path, trainer, {16, 16, 16});

  auto loaded = load_checkpoint<DetectionNet>(path);
  EXPECT_EQ(loaded.meta.model, "detection");
  EXPECT_EQ(loaded.meta.epochs_completed, 2);
  EXPECT_EQ(loaded.meta.topology, tiny::detection_topology());
  EXPECT_EQ(loaded.meta.patch_extent, (Index3{16, 16, 16}));
  EXPECT_TRUE(loaded.has_optimizer_state);
  const auto a = trainer.net()->parameters();
  const auto b = loaded.net->parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(torch::equal(a[i], b[i]));
  const auto ab = trainer.net()->buffers();
  const auto bb = loaded.net->buffers();
  for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_TRUE(torch::equal(ab[i], bb[i]));

  Trainer<DetectionNet> resumed(loaded.net, loaded.meta.train, loaded.meta.patch_extent);
  resumed.optimizer().load(loaded.optimizer_state);
  resumed.set_epochs_completed(loaded.meta.epochs_completed);
  const auto log = resumed.run(patches, 1);
  ASSERT_EQ(log.size(), 1U);
  EXPECT_EQ(log[0].epoch, 3);

  EXPECT_THROW(load_checkpoint<IdentificationNet>(path), IoError);
  try {
    load_checkpoint<DetectionNet>(dir.path() / "nope.pt");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.pt"), std::string::npos);
  }
}

TEST(Inference, TrainedNetKeepsAirBackground) {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 60;
  cfg.seed = 1;
  const auto trained = train_detection(tiny::detection_pair(), cfg, tiny::detection_topology());
  const Volume air{Array3<float>({30, 21, 37}, -1000.0F), Geometry{}};
  TilingParams tiling;
  tiling.patch = {16, 16, 16};
  tiling.step = {8, 8, 8};
  tiling.pad = {4, 4, 4};
  const auto out = detect_volume(detection_predictor(trained.net), air, tiling);
  for (auto v : out.data.values()) ASSERT_EQ(v, 0);
}

}  // namespace
}  // namespace spineloc
