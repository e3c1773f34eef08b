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

// The two networks and their losses.
//
// Both are U-nets: per level two (conv -> batch norm -> ReLU) blocks with
// stride-1 'same' convolutions, 2x max-pooling between levels, nearest
// upsampling and skip concatenation on the way back up, and a 1x1 head.
//
//   detection:      3D, 1 input channel, 2 output classes (softmax)
//   identification: 2D, 8 input channels (the slab), 1 unbounded output,
//                   anisotropic kernels at the lowest level

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spineloc/error.hpp"

namespace spineloc {

struct UNetConfig {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 2;
  std::vector<std::int64_t> channels{16, 32, 64, 128};  // per level, top to bottom
  std::vector<std::int64_t> kernel{3, 3, 3};            // all levels but the lowest
  std::vector<std::int64_t> bottom_kernel{3, 3, 3};     // lowest level
  // Moving-average retention: running = m * running + (1 - m) * batch.
  double bn_momentum = 0.1;

  std::size_t dims() const { return kernel.size(); }
  std::int64_t levels() const { return static_cast<std::int64_t>(channels.size()); }
  // Spatial extents must be multiples of this.
  std::int64_t size_multiple() const { return std::int64_t{1} << (levels() - 1); }

  void validate() const {
    if (in_channels < 1 || out_channels < 1) raise<InvalidArgument>("channel counts must be positive");
    if (channels.empty()) raise<InvalidArgument>("U-net needs at least one level");
    for (auto c : channels) {
      if (c < 1) raise<InvalidArgument>("channel widths must be positive");
    }
    if (kernel.size() != bottom_kernel.size() || (dims() != 2 && dims() != 3)) {
      raise<InvalidArgument>("kernels must be 2D or 3D and agree in rank");
    }
    for (auto k : kernel) {
      if (k < 1) raise<InvalidArgument>("kernel sizes must be positive");
    }
    for (auto k : bottom_kernel) {
      if (k < 1) raise<InvalidArgument>("kernel sizes must be positive");
    }
    if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) raise<InvalidArgument>("batch-norm momentum must lie in (0, 1)");
  }

  static UNetConfig detection() { return {}; }

  static UNetConfig identification() {
    UNetConfig c;
    c.in_channels = 8;
    c.out_channels = 1;
    c.channels = {32, 64, 128, 256};
    c.kernel = {3, 3};
    c.bottom_kernel = {5, 20};
    return c;
  }

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

inline nlohmann::json to_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels}, {"channels", c.channels},
          {"kernel", c.kernel}, {"bottom_kernel", c.bottom_kernel}, {"bn_momentum", c.bn_momentum}};
}

inline UNetConfig unet_config_from_json(const nlohmann::json& j, UNetConfig c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  c.channels = j.value("channels", c.channels);
  c.kernel = j.value("kernel", c.kernel);
  c.bottom_kernel = j.value("bottom_kernel", c.bottom_kernel);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.validate();
  return c;
}

// Theoretical receptive field (pixels) along one spatial axis.
inline std::int64_t receptive_field(const UNetConfig& c, std::size_t axis) {
  std::int64_t rf = 1;
  std::int64_t jump = 1;
  const std::int64_t levels = c.levels();
  for (std::int64_t l = 0; l + 1 < levels; ++l) {
    rf += 2 * (c.kernel[axis] - 1) * jump;
    rf += jump;  // 2x pooling
    jump *= 2;
  }
  rf += 2 * (c.bottom_kernel[axis] - 1) * jump;
  for (std::int64_t l = levels - 2; l >= 0; --l) {
    jump /= 2;
    rf += 2 * (c.kernel[axis] - 1) * jump;
  }
  return rf;
}

namespace detail {

template <std::size_t D>
struct Layers;

template <>
struct Layers<2> {
  using Conv = torch::nn::Conv2d;
  using ConvOptions = torch::nn::Conv2dOptions;
  using BatchNorm = torch::nn::BatchNorm2d;
  using BatchNormOptions = torch::nn::BatchNorm2dOptions;
  using MaxPool = torch::nn::MaxPool2d;
  using MaxPoolOptions = torch::nn::MaxPool2dOptions;
};

template <>
struct Layers<3> {
  using Conv = torch::nn::Conv3d;
  using ConvOptions = torch::nn::Conv3dOptions;
  using BatchNorm = torch::nn::BatchNorm3d;
  using BatchNormOptions = torch::nn::BatchNorm3dOptions;
  using MaxPool = torch::nn::MaxPool3d;
  using MaxPoolOptions = torch::nn::MaxPool3dOptions;
};

template <std::size_t D>
torch::nn::Sequential conv_block(std::int64_t in, std::int64_t out, const std::vector<std::int64_t>& kernel,
                                 double momentum) {
  using L = Layers<D>;
  torch::ExpandingArray<D> k(kernel);
  // libtorch momentum weights the new batch statistic
  const double torch_momentum = 1.0 - momentum;
  torch::nn::Sequential block;
  block->push_back(typename L::Conv(typename L::ConvOptions(in, out, k).padding(torch::kSame).bias(false)));
  block->push_back(typename L::BatchNorm(typename L::BatchNormOptions(out).momentum(torch_momentum)));
  block->push_back(torch::nn::ReLU());
  block->push_back(typename L::Conv(typename L::ConvOptions(out, out, k).padding(torch::kSame).bias(false)));
  block->push_back(typename L::BatchNorm(typename L::BatchNormOptions(out).momentum(torch_momentum)));
  block->push_back(torch::nn::ReLU());
  return block;
}

}  // namespace detail

template <std::size_t D>
class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(UNetConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.dims() != D) raise<InvalidArgument>("U-net rank ", D, " configured with ", config_.dims(), "D kernels");
    const auto levels = static_cast<std::size_t>(config_.levels());
    std::int64_t in = config_.in_channels;
    for (std::size_t l = 0; l < levels; ++l) {
      const auto& k = l + 1 == levels ? config_.bottom_kernel : config_.kernel;
      down_.push_back(register_module("down" + std::to_string(l), detail::conv_block<D>(in, config_.channels[l], k, config_.bn_momentum)));
      in = config_.channels[l];
    }
    for (std::size_t l = levels - 1; l-- > 0;) {
      up_.push_back(register_module("up" + std::to_string(l),
                                    detail::conv_block<D>(in + config_.channels[l], config_.channels[l], config_.kernel,
                                                          config_.bn_momentum)));
      in = config_.channels[l];
    }
    head_ = register_module(
        "head", typename detail::Layers<D>::Conv(typename detail::Layers<D>::ConvOptions(in, config_.out_channels, 1)));
    pool_ = register_module("pool", typename detail::Layers<D>::MaxPool(typename detail::Layers<D>::MaxPoolOptions(2)));
  }

  // x: {N, in_channels, spatial...}; returns {N, out_channels, spatial...}.
  torch::Tensor forward(torch::Tensor x) {
    if (x.dim() != static_cast<std::int64_t>(D) + 2 || x.size(1) != config_.in_channels) {
      raise<ShapeMismatch>("expected input {N, ", config_.in_channels, ", ", D, " spatial dims}, got ", x.sizes());
    }
    const std::int64_t m = config_.size_multiple();
    for (std::size_t a = 0; a < D; ++a) {
      if (x.size(static_cast<std::int64_t>(a) + 2) % m != 0) {
        raise<ShapeMismatch>("spatial extents must be multiples of ", m, ", got ", x.sizes());
      }
    }
    std::vector<torch::Tensor> skips;
    const std::size_t levels = down_.size();
    for (std::size_t l = 0; l + 1 < levels; ++l) {
      x = down_[l]->forward(x);
      skips.push_back(x);
      x = pool_->forward(x);
    }
    x = down_.back()->forward(x);
    for (std::size_t u = 0; u < up_.size(); ++u) {
      torch::Tensor skip = skips[skips.size() - 1 - u];
      x = torch::nn::functional::interpolate(
          x, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<std::int64_t>(skip.sizes().begin() + 2, skip.sizes().end()))
                 .mode(torch::kNearest));
      x = up_[u]->forward(torch::cat({x, skip}, 1));
    }
    return head_->forward(x);
  }

  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
  typename detail::Layers<D>::Conv head_{nullptr};
  typename detail::Layers<D>::MaxPool pool_{nullptr};
};

class DetectionNetImpl : public UNetImpl<3> {
 public:
  explicit DetectionNetImpl(UNetConfig config = UNetConfig::detection()) : UNetImpl<3>(std::move(config)) {
    if (this->config().out_channels != 2) raise<InvalidArgument>("detection net has exactly two classes");
  }

  // Per-voxel class distribution {N, 2, X, Y, Z}.
  torch::Tensor probabilities(torch::Tensor x) { return torch::softmax(forward(std::move(x)), 1); }
};
TORCH_MODULE(DetectionNet);

class IdentificationNetImpl : public UNetImpl<2> {
 public:
  explicit IdentificationNetImpl(UNetConfig config = UNetConfig::identification()) : UNetImpl<2>(std::move(config)) {
    if (this->config().out_channels != 1) raise<InvalidArgument>("identification net has a single output channel");
  }
};
TORCH_MODULE(IdentificationNet);

inline constexpr double kProbabilityFloor = 1e-7;

// Weighted two-class cross entropy, averaged over voxels:
//   -[w0 * [t=0] * log p0 + w1 * [t=1] * log p1]
// probs: {N, 2, ...} class probabilities; target: {N, ...} with values 0/1.
inline torch::Tensor detection_loss(const torch::Tensor& probs, const torch::Tensor& target,
                                    std::array<double, 2> weights = {0.1, 0.9}) {
  if (probs.dim() < 2 || probs.size(1) != 2) raise<ShapeMismatch>("detection probabilities must be {N, 2, ...}");
  std::vector<std::int64_t> expect{probs.size(0)};
  for (std::int64_t d = 2; d < probs.dim(); ++d) expect.push_back(probs.size(d));
  if (target.sizes() != torch::IntArrayRef(expect)) {
    raise<ShapeMismatch>("detection target ", target.sizes(), " does not match probabilities ", probs.sizes());
  }
  {
    torch::NoGradGuard guard;
    if (probs.numel() > 0 && (probs.min().item<double>() < 0.0 || probs.max().item<double>() > 1.0 + 1e-6)) {
      raise<InvalidArgument>("probabilities outside [0, 1]");
    }
    if (target.numel() > 0 && ((target != 0) & (target != 1)).any().item<bool>()) {
      raise<InvalidArgument>("detection target must be binary");
    }
  }
  const auto p = probs.clamp(kProbabilityFloor, 1.0);
  const auto t1 = target.to(probs.scalar_type());
  const auto t0 = 1.0 - t1;
  const auto per_voxel = weights[0] * t0 * torch::log(p.select(1, 0)) + weights[1] * t1 * torch::log(p.select(1, 1));
  return -per_voxel.mean();
}

// L1 over pixels whose target is a vertebra (target != 0), averaged over
// those pixels; background pixels contribute nothing. Zero when the
// target has no vertebra pixels.
inline torch::Tensor identification_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.sizes() != target.sizes()) {
    raise<ShapeMismatch>("identification target ", target.sizes(), " does not match prediction ", pred.sizes());
  }
  const auto t = target.to(pred.scalar_type());
  const auto mask = (t != 0).to(pred.scalar_type());
  const auto count = mask.sum();
  const auto total = (torch::abs(pred - t) * mask).sum();
  return total / torch::clamp_min(count, 1.0);
}

// Foreground Dice of two binary tensors; 1 when both are empty.
inline double dice_score(const torch::Tensor& pred, const torch::Tensor& target) {
  torch::NoGradGuard guard;
  const auto p = (pred != 0).to(torch::kDouble);
  const auto t = (target != 0).to(torch::kDouble);
  const double inter = (p * t).sum().item<double>();
  const double denom = p.sum().item<double>() + t.sum().item<double>();
  return denom == 0.0 ? 1.0 : 2.0 * inter / denom;
}

}  // namespace spineloc
