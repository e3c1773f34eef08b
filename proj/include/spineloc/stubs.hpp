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

// Analytic stand-ins for the two networks, used by `predict --stub` and
// by tests. They read scans produced by make_synthetic_scan(): vertebra
// voxels carry intensity offset + step * label, everything else is air.

#pragma once

#include <cmath>

#include "spineloc/geometry.hpp"
#include "spineloc/sampler.hpp"

namespace spineloc {

struct StubConfig {
  float detection_threshold_hu = 50.0F;
  float label_offset_hu = 100.0F;
  float label_step_hu = 40.0F;
};

inline float denormalize_intensity(float n, const SamplerConfig& window) {
  return (n + 1.0F) * 0.5F * (window.window_high - window.window_low) + window.window_low;
}

// Foreground probability 1 where the intensity exceeds the threshold.
struct ThresholdDetectionStub {
  StubConfig stub;
  SamplerConfig window;

  Array3<float> operator()(const Array3<float>& w) const {
    Array3<float> out(w.extent());
    auto src = w.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = denormalize_intensity(src[i], window) > stub.detection_threshold_hu ? 1.0F : 0.0F;
    }
    return out;
  }
};

// Decodes the label from the target slice's intensity; 0 for air.
struct IntensityIdentificationStub {
  StubConfig stub;
  SamplerConfig window;
  std::int64_t target_slice = 3;

  Array2<float> operator()(const Array3<float>& slab) const {
    const auto& e = slab.extent();
    Array2<float> out(e[1], e[2], 0.0F);
    for (std::int64_t y = 0; y < e[1]; ++y) {
      for (std::int64_t z = 0; z < e[2]; ++z) {
        const float hu = denormalize_intensity(slab(target_slice, y, z), window);
        if (hu > stub.detection_threshold_hu) out(y, z) = (hu - stub.label_offset_hu) / stub.label_step_hu;
      }
    }
    return out;
  }
};

}  // namespace spineloc
