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

// Adapters from trained networks to the predictor callables used by
// detect_volume / identify_volume.

#pragma once

#include <torch/torch.h>

#include "spineloc/geometry.hpp"
#include "spineloc/nets.hpp"

namespace spineloc {

inline auto detection_predictor(DetectionNet net, torch::Device device = torch::kCPU) {
  net->to(device);
  net->eval();
  return [net, device](const Array3<float>& window) mutable -> Array3<float> {
    torch::NoGradGuard guard;
    const auto& e = window.extent();
    auto x = torch::from_blob(const_cast<float*>(window.data()), {1, 1, e[0], e[1], e[2]}, torch::kFloat).to(device);
    auto p1 = net->probabilities(x).select(1, 1).squeeze(0).to(torch::kCPU).contiguous();
    Array3<float> out(e);
    std::copy_n(p1.data_ptr<float>(), out.size(), out.data());
    return out;
  };
}

inline auto identification_predictor(IdentificationNet net, torch::Device device = torch::kCPU) {
  net->to(device);
  net->eval();
  return [net, device](const Array3<float>& slab) mutable -> Array2<float> {
    torch::NoGradGuard guard;
    const auto& e = slab.extent();
    auto x = torch::from_blob(const_cast<float*>(slab.data()), {1, e[0], e[1], e[2]}, torch::kFloat).to(device);
    auto y = net->forward(x).squeeze(0).squeeze(0).to(torch::kCPU).contiguous();
    Array2<float> out(e[1], e[2]);
    std::copy_n(y.data_ptr<float>(), out.size(), out.data());
    return out;
  };
}

}  // namespace spineloc
