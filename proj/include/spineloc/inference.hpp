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

// Whole-scan application of the two networks.
//
// Predictors are plain callables so the same code runs trained networks
// and analytic stubs:
//   detection:      Array3<float> window -> Array3<float> foreground probability
//   identification: Array3<float> slab (C x H x W) -> Array2<float> (H x W)
// Inputs handed to predictors are intensity-normalised, with padding 0.

#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <vector>

#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/sampler.hpp"
#include "spineloc/vertebra.hpp"

namespace spineloc {

struct TilingParams {
  Index3 patch{64, 64, 80};
  Index3 step{32, 32, 40};
  Index3 pad{16, 16, 20};

  void validate() const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (step[a] < 1 || pad[a] < 0) raise<InvalidArgument>("tiling step must be positive and pad non-negative");
      if (patch[a] != step[a] + 2 * pad[a]) {
        raise<InvalidArgument>("tiling patch must equal step + 2*pad on every axis (patch ", patch, ", step ", step,
                               ", pad ", pad, ")");
      }
    }
  }
};

// Windows over the scan padded by `pad` on each side and rounded up to a
// whole number of steps. The retained interior of window w (its central
// `step` block) covers original voxels [offsets[w], offsets[w] + step).
struct TilingPlan {
  TilingParams params;
  Index3 extent{};
  Index3 padded{};
  std::vector<Index3> offsets;
};

inline TilingPlan plan_tiling(const Index3& extent, const TilingParams& params = {}) {
  params.validate();
  TilingPlan plan{params, extent, {}, {}};
  Index3 count{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (extent[a] < 1) raise<InvalidArgument>("extent must be positive, got ", extent);
    count[a] = (extent[a] + params.step[a] - 1) / params.step[a];
    plan.padded[a] = count[a] * params.step[a] + 2 * params.pad[a];
  }
  for (std::int64_t i = 0; i < count[0]; ++i) {
    for (std::int64_t j = 0; j < count[1]; ++j) {
      for (std::int64_t k = 0; k < count[2]; ++k) {
        plan.offsets.push_back({i * params.step[0], j * params.step[1], k * params.step[2]});
      }
    }
  }
  return plan;
}

inline Array3<float> normalized(const Volume& v, const SamplerConfig& cfg) {
  Array3<float> out(v.extent());
  auto src = v.data.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = normalize_intensity(src[i], cfg);
  return out;
}

template <typename Fn>
concept DetectionPredictor = std::invocable<Fn&, const Array3<float>&> &&
                             std::same_as<std::invoke_result_t<Fn&, const Array3<float>&>, Array3<float>>;

template <typename Fn>
concept IdentificationPredictor = std::invocable<Fn&, const Array3<float>&> &&
                                  std::same_as<std::invoke_result_t<Fn&, const Array3<float>&>, Array2<float>>;

// Overlap-tiled detection. Each window's outer `pad` border is discarded;
// a voxel is foreground when its probability exceeds 0.5.
template <DetectionPredictor Fn>
DenseLabelMap detect_volume(Fn&& predict, const Volume& v, const TilingParams& params = {},
                            const SamplerConfig& window = {}) {
  const TilingPlan plan = plan_tiling(v.extent(), params);
  const Array3<float> input = normalized(v, window);
  DenseLabelMap out{Array3<std::uint8_t>(v.extent(), 0), v.geometry};
  const Index3& e = v.extent();
  const Index3& pad = params.pad;

  for (const Index3& off : plan.offsets) {
    // window covers original voxels [off - pad, off - pad + patch)
    Array3<float> win(params.patch, 0.0F);
    for (std::int64_t i = 0; i < params.patch[0]; ++i) {
      const std::int64_t si = off[0] - pad[0] + i;
      if (si < 0 || si >= e[0]) continue;
      for (std::int64_t j = 0; j < params.patch[1]; ++j) {
        const std::int64_t sj = off[1] - pad[1] + j;
        if (sj < 0 || sj >= e[1]) continue;
        for (std::int64_t k = 0; k < params.patch[2]; ++k) {
          const std::int64_t sk = off[2] - pad[2] + k;
          if (sk >= 0 && sk < e[2]) win(i, j, k) = input(si, sj, sk);
        }
      }
    }
    const Array3<float> prob = predict(win);
    if (prob.extent() != params.patch) {
      raise<ShapeMismatch>("detection predictor returned ", prob.extent(), " for a ", params.patch, " window");
    }
    for (std::int64_t i = 0; i < params.step[0] && off[0] + i < e[0]; ++i) {
      for (std::int64_t j = 0; j < params.step[1] && off[1] + j < e[1]; ++j) {
        for (std::int64_t k = 0; k < params.step[2] && off[2] + k < e[2]; ++k) {
          out.data(off[0] + i, off[1] + j, off[2] + k) = prob(pad[0] + i, pad[1] + j, pad[2] + k) > 0.5F ? 1 : 0;
        }
      }
    }
  }
  return out;
}

struct SlabParams {
  std::int64_t slices = 8;
  std::int64_t target_slice = 3;  // the slab's 4th slice
  std::int64_t multiple = 16;     // in-plane extents are padded to this

  void validate() const {
    if (slices < 1 || target_slice < 0 || target_slice >= slices || multiple < 1) {
      raise<InvalidArgument>("invalid slab parameters");
    }
  }
};

inline std::int64_t round_up(std::int64_t n, std::int64_t m) { return (n + m - 1) / m * m; }

// Per-slice identification: for each left-right position x, the slab
// [x - target, x - target + slices) (edge-replicated) is padded in-plane
// to a multiple of 16, run through the predictor and cropped back.
template <IdentificationPredictor Fn>
RealMap identify_volume(Fn&& predict, const Volume& v, const SlabParams& slab = {}, const SamplerConfig& window = {}) {
  slab.validate();
  const Array3<float> input = normalized(v, window);
  const Index3& e = v.extent();
  const std::int64_t rows = round_up(e[1], slab.multiple);
  const std::int64_t cols = round_up(e[2], slab.multiple);
  RealMap out{Array3<float>(e, 0.0F), v.geometry};

  for (std::int64_t x = 0; x < e[0]; ++x) {
    Array3<float> s({slab.slices, rows, cols}, 0.0F);
    for (std::int64_t c = 0; c < slab.slices; ++c) {
      const std::int64_t sx = std::clamp<std::int64_t>(x - slab.target_slice + c, 0, e[0] - 1);
      for (std::int64_t y = 0; y < e[1]; ++y) {
        std::copy_n(&input(sx, y, 0), e[2], &s(c, y, 0));
      }
    }
    const Array2<float> pred = predict(s);
    if (pred.rows() != rows || pred.cols() != cols) {
      raise<ShapeMismatch>("identification predictor returned ", pred.rows(), 'x', pred.cols(), " for a ", rows, 'x',
                           cols, " slab");
    }
    for (std::int64_t y = 0; y < e[1]; ++y) {
      std::copy_n(&pred(y, 0), e[2], &out.data(x, y, 0));
    }
  }
  return out;
}

// Voxel-wise product of the binary detection map and the identification
// regression, rounded half away from zero and clamped to 0..26.
inline DenseLabelMap fuse(const DenseLabelMap& detection, const RealMap& identification) {
  require_same_geometry(detection, identification, "fuse");
  DenseLabelMap out{Array3<std::uint8_t>(detection.extent(), 0), detection.geometry};
  auto det = detection.data.values();
  auto id = identification.data.values();
  auto dst = out.data.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (det[i] > 1) raise<InvalidArgument>("detection map must be binary");
    const double v = static_cast<double>(det[i]) * static_cast<double>(id[i]);
    if (!std::isfinite(v)) continue;
    dst[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, static_cast<double>(kLastVertebra)));
  }
  return out;
}

}  // namespace spineloc
