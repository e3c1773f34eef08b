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

// Synthetic spines for smoke tests, demos and the stub pipeline.

#pragma once

#include <cmath>
#include <cstdint>

#include "spineloc/centroids.hpp"
#include "spineloc/dense_label.hpp"
#include "spineloc/rng.hpp"
#include "spineloc/stubs.hpp"

namespace spineloc {

struct SpineSpec {
  int first_label = 17;  // T10
  int count = 5;
  Index3 extent{100, 100, 170};
  double step_mm = 28.0;     // centroid spacing along z
  double sway_mm = 3.0;      // in-plane curvature amplitude
  std::uint64_t seed = 0;
};

// Centroids running down the z axis, centred in the volume with a gentle
// in-plane sway.
inline CentroidSet synthetic_spine(const SpineSpec& spec) {
  if (spec.count < 1 || spec.first_label < kFirstVertebra || spec.first_label + spec.count - 1 > kLastVertebra) {
    raise<InvalidArgument>("synthetic spine labels outside C1..S2");
  }
  Rng rng(spec.seed);
  const double cx = static_cast<double>(spec.extent[0] - 1) / 2.0;
  const double cy = static_cast<double>(spec.extent[1] - 1) / 2.0;
  const double z0 = (static_cast<double>(spec.extent[2] - 1) - spec.step_mm * (spec.count - 1)) / 2.0;
  if (z0 < 0.0) raise<InvalidArgument>("synthetic spine does not fit along z");
  const double phase = rng.uniform() * 6.283185307179586;
  CentroidSet out;
  for (int i = 0; i < spec.count; ++i) {
    const double t = phase + 0.6 * i;
    out.insert(VertebraLabel(spec.first_label + i),
               {cx + spec.sway_mm * std::sin(t), cy + spec.sway_mm * std::cos(t), z0 + spec.step_mm * i});
  }
  return out;
}

// Scan whose vertebra voxels encode their label as intensity (see
// StubConfig); background is air (-1000).
inline Volume make_synthetic_scan(const CentroidSet& centroids, const RadiiTable& radii, const Index3& extent,
                                  const StubConfig& stub = {}) {
  Volume v{Array3<float>(extent, -1000.0F), Geometry{}};
  const DenseLabelMap labels = make_dense_labels(centroids, radii, v);
  auto src = labels.data.values();
  auto dst = v.data.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] != 0) dst[i] = stub.label_offset_hu + stub.label_step_hu * static_cast<float>(src[i]);
  }
  return v;
}

}  // namespace spineloc
